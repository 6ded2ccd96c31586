//! Runs the template-corpus experiment and prints the validation curve.
//!
//! `cargo run --release --example toy_pipeline -- [seed] [pretrain_steps] [rl_steps]`

use rlsum::toy::{run_experiment, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let cfg = ExperimentConfig {
        seed: arg(0, 1),
        pretrain_steps: arg(1, 500) as usize,
        rl_steps: arg(2, 500) as usize,
        eval_every: 25,
        ..ExperimentConfig::default()
    };
    let t = std::time::Instant::now();
    let r = run_experiment::<f64>(&cfg).expect("experiment runs");
    let show = |name: &str, v: &rlsum::rl::ValidationReport<f64>| {
        let gaps: Vec<String> = v
            .per_length
            .iter()
            .map(|l| format!("{}:{:.2}/{:.2}", l.length, l.mean_generated, l.mean_abs_gap))
            .collect();
        println!(
            "{name:>10} step {:>4} total {:.4} C {:.4} F {:.4} L {:.4} Q {:.5} {}",
            v.step,
            v.mean_total,
            v.content,
            v.fluency,
            v.length,
            v.quality,
            gaps.join(" ")
        );
    };
    show("initial", &r.initial);
    if let (Some(a), Some(b)) = (r.pretrain.pretrain.first(), r.pretrain.pretrain.last()) {
        println!("pretrain loss {:.4} -> {:.4}", a.loss, b.loss);
    }
    show("pretrained", &r.pretrained);
    for v in &r.rl.validation {
        show("rl", v);
    }
    for w in r.rl.reports.chunks(100) {
        let m: f64 = w.iter().map(|s| s.mean_sampled).sum::<f64>() / w.len() as f64;
        println!("window {:>4}: mean sampled total {:.4}", w[0].step, m);
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
}
