// Drives the command-line pipeline in-process: synth, fuse (two methods),
// eval and sc, all inside a temporary directory.
//
//     cargo run --release --example command_line

use std::error::Error;
use std::fs;
use std::path::Path;

use consensus_fuse::cli::run;
use consensus_fuse::eval::Summary;

pub struct PipelineRun {
    pub metrics_csv: String,
    pub summary: Summary,
    pub sc_json: String,
}

fn cli(args: &[&str]) -> consensus_fuse::Result<()> {
    run(std::iter::once("consensus-fuse").chain(args.iter().copied()))
}

pub fn run_pipeline(root: &Path) -> Result<PipelineRun, Box<dyn Error>> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let forest = ["--trees", "4", "--depth", "10", "--bagging", "0.1"];
    cli(&["synth", "--n", "4", "--width", "64", "--height", "64", "--missing", "0.5", "--seed", "5", "--out", &p("bench")])?;
    let manifest = p("bench/manifest.json");
    for method in ["gcme", "mv"] {
        let mut args = vec!["fuse", "--manifest", &manifest, "--method", method, "--seed", "5"];
        args.extend(forest);
        let out = p(method);
        args.extend(["--out", &out]);
        cli(&args)?;
    }
    let gcme = format!("gcme={}", p("gcme"));
    let mv = format!("mv={}", p("mv"));
    cli(&["eval", "--manifest", &manifest, "--consensus", &gcme, "--consensus", &mv, "--out", &p("eval")])?;
    let mut args = vec!["sc", "--manifest", &manifest, "--seed", "5"];
    args.extend(forest);
    let sc_out = p("sc");
    args.extend(["--out", &sc_out]);
    cli(&args)?;

    Ok(PipelineRun {
        metrics_csv: fs::read_to_string(root.join("eval/metrics.csv"))?,
        summary: serde_json::from_str(&fs::read_to_string(root.join("eval/summary.json"))?)?,
        sc_json: fs::read_to_string(root.join("sc/sc.json"))?,
    })
}

pub fn run_example() -> Result<PipelineRun, Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    run_pipeline(dir.path())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let r = run_example()?;
    print!("{}", r.metrics_csv);
    for (method, s) in &r.summary.methods {
        if let Some(d) = s.dice {
            println!("{method}: Dice {:.4} ± {:.4}", d.mean, d.sd);
        }
    }
    print!("{}", r.sc_json);
    Ok(())
}
