// Denoises a binary image with an exact graph-cut MRF and checks the
// result against brute force on a tiny instance.
//
//     cargo run --example graph_cut

use std::error::Error;

use consensus_fuse::graphcut::{grid_pairs_8, max_flow, minimize_binary_mrf, mrf_energy, FlowGraph, Pairwise};

pub struct GraphCutDemo {
    pub textbook_flow: f64,
    /// Pixels that differ from the clean square, before and after the cut.
    pub noisy_errors: usize,
    pub denoised_errors: usize,
    pub exact_matches_brute_force: bool,
}

fn noisy_square(n: usize) -> (Vec<u8>, Vec<u8>) {
    let clean: Vec<u8> = (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            u8::from((n / 4..3 * n / 4).contains(&x) && (n / 4..3 * n / 4).contains(&y))
        })
        .collect();
    // flip a deterministic scatter of pixels
    let noisy = clean
        .iter()
        .enumerate()
        .map(|(i, &v)| if (i * 7919) % 13 == 0 { 1 - v } else { v })
        .collect();
    (clean, noisy)
}

fn grid_mrf(observed: &[u8], n: usize, lambda: f64) -> (Vec<[f64; 2]>, Vec<Pairwise>) {
    let unary = observed
        .iter()
        .map(|&v| if v == 1 { [0.8, 0.2] } else { [0.2, 0.8] })
        .collect();
    let pairwise = grid_pairs_8(n, n)
        .into_iter()
        .map(|(u, v, d)| Pairwise { u, v, weight: lambda / d })
        .collect();
    (unary, pairwise)
}

pub fn run_example() -> Result<GraphCutDemo, Box<dyn Error>> {
    // classic six-node network with maximum flow 23
    let mut g = FlowGraph::new(4);
    g.add_terminal(0, 16.0, 0.0)?;
    g.add_terminal(1, 13.0, 0.0)?;
    g.add_edge(0, 1, 10.0, 4.0)?;
    g.add_edge(0, 2, 12.0, 0.0)?;
    g.add_edge(1, 3, 14.0, 0.0)?;
    g.add_edge(2, 1, 9.0, 0.0)?;
    g.add_edge(3, 2, 7.0, 0.0)?;
    g.add_terminal(2, 0.0, 20.0)?;
    g.add_terminal(3, 0.0, 4.0)?;
    let textbook_flow = max_flow(&g).flow;

    let n = 32;
    let (clean, noisy) = noisy_square(n);
    let (unary, pairwise) = grid_mrf(&noisy, n, 0.25);
    let sol = minimize_binary_mrf(&unary, &pairwise)?;
    let errors = |l: &[u8]| l.iter().zip(&clean).filter(|(a, b)| a != b).count();

    let (small_u, small_p) = grid_mrf(&noisy[..16], 4, 0.25);
    let best = (0u32..1 << 16)
        .map(|bits| {
            let labels: Vec<u8> = (0..16).map(|i| ((bits >> i) & 1) as u8).collect();
            mrf_energy(&small_u, &small_p, &labels)
        })
        .fold(f64::INFINITY, f64::min);
    let exact = minimize_binary_mrf(&small_u, &small_p)?.energy;

    Ok(GraphCutDemo {
        textbook_flow,
        noisy_errors: errors(&noisy),
        denoised_errors: errors(&sol.labels),
        exact_matches_brute_force: (exact - best).abs() < 1e-9,
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let d = run_example()?;
    println!("max flow of the textbook network: {}", d.textbook_flow);
    println!("wrong pixels: {} noisy, {} after the cut", d.noisy_errors, d.denoised_errors);
    println!("4x4 optimum matches exhaustive search: {}", d.exact_matches_brute_force);
    Ok(())
}
