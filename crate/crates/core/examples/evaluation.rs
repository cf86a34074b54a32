// Metrics on hand-made masks, a paired t-test and the CSV/summary output.
//
//     cargo run --example evaluation

use std::error::Error;

use consensus_fuse::eval::{
    dice, evaluate, hausdorff, paired_t_test, retina_metrics, summarize, write_metrics_csv,
    MetricRow, RetinaMetrics, Summary, TTest,
};
use consensus_fuse::Mask;

pub struct EvaluationDemo {
    pub dice: f64,
    pub hausdorff: f64,
    pub retina: RetinaMetrics,
    pub t_test: TTest,
    pub csv: String,
    pub summary: Summary,
}

fn disc(size: usize, r: f64) -> Mask {
    let c = size as f64 / 2.0;
    Mask::from_fn(size, size, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r)
}

pub fn run_example() -> Result<EvaluationDemo, Box<dyn Error>> {
    let reference = disc(64, 20.0);
    let larger = disc(64, 24.0);

    let mut rows = Vec::new();
    for (i, r) in [18.0, 19.0, 20.5, 21.0, 23.0].into_iter().enumerate() {
        let case_id = format!("case_{i:04}");
        rows.push(MetricRow {
            case_id: case_id.clone(),
            method: "tight".into(),
            report: evaluate(&disc(64, r), &reference)?,
        });
        rows.push(MetricRow {
            case_id,
            method: "loose".into(),
            report: evaluate(&disc(64, r + 3.0), &reference)?,
        });
    }
    let tight: Vec<f64> = rows.iter().filter(|r| r.method == "tight").map(|r| r.report.dice).collect();
    let loose: Vec<f64> = rows.iter().filter(|r| r.method == "loose").map(|r| r.report.dice).collect();

    let mut csv = Vec::new();
    write_metrics_csv(&rows, &mut csv)?;
    Ok(EvaluationDemo {
        dice: dice(&larger, &reference)?,
        hausdorff: hausdorff(&larger, &reference)?,
        retina: retina_metrics(&larger, &reference)?,
        t_test: paired_t_test(&tight, &loose)?,
        csv: String::from_utf8(csv)?,
        summary: summarize(&rows),
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let d = run_example()?;
    println!("discs r=24 vs r=20: Dice {:.3}, HD {:.2}", d.dice, d.hausdorff);
    println!("F {:.3}, S {:.3}, radial error B {:.2} px", d.retina.f, d.retina.s, d.retina.b);
    println!("tight vs loose: t = {:.2}, p = {:.4}", d.t_test.t, d.t_test.p);
    print!("{}", d.csv);
    println!("{}", serde_json::to_string_pretty(&d.summary)?);
    Ok(())
}
