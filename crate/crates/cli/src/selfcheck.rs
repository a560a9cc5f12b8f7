use clap::Args;
use layermix::sampling::{choose_blend_method, choose_layer_exit, default_blend_weights, sample_conic_weights};
use layermix::{BlendMethod, BlendMethodId, RngStream};
use serde::Serialize;

use crate::augment::positive_f64;
use crate::exit::Failure;

/// Deviations beyond this many standard errors fail a check.
const Z_LIMIT: f64 = 5.0;
const EXIT_P_LIMIT: f64 = 0.01;

#[derive(Args, Debug, Clone, Serialize)]
pub struct SelfcheckArgs {
    /// Draws per check
    #[arg(long, value_name = "INT", default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(100..))]
    pub n: u64,
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub seed: u64,
    /// Blending ratio of the conic weights
    #[arg(long, value_name = "FLOAT", default_value_t = 3.0, value_parser = positive_f64)]
    pub beta: f64,
    /// Probabilities the sampler uses for arithmetic, geometric, pixel and
    /// element blending; checked against 1/3,1/3,1/6,1/6
    #[arg(long, value_name = "P,P,P,P", value_delimiter = ',')]
    pub blend_probs: Option<Vec<f64>>,
}

struct Row {
    name: String,
    observed: f64,
    expected: f64,
    std_err: f64,
    pass: bool,
}

fn mean_row(name: &str, sum: f64, sum_sq: f64, n: f64, expected: f64) -> Row {
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let std_err = (var / n).sqrt();
    Row { name: name.into(), observed: mean, expected, std_err, pass: (mean - expected).abs() <= Z_LIMIT * std_err }
}

pub fn run(args: SelfcheckArgs) -> Result<(), Failure> {
    let reference = default_blend_weights();
    let weights: Vec<BlendMethodId> = match &args.blend_probs {
        Some(p) if p.len() != 4 => {
            return Err(Failure::Usage(format!("--blend-probs needs 4 values, got {}", p.len())))
        }
        Some(p) => BlendMethod::ALL
            .iter()
            .zip(p)
            .map(|(&tag, &probability)| BlendMethodId { tag, probability })
            .collect(),
        None => reference.clone(),
    };
    layermix::sampling::validate_blend_weights(&weights)?;
    let n = args.n;
    let nf = n as f64;
    let mut rows = Vec::new();

    let mut rng = RngStream::new(args.seed, 0);
    let (mut sa, mut sa2, mut sb, mut sb2, mut ss, mut ss2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let w = sample_conic_weights(&mut rng, args.beta)?;
        sa += w.a;
        sa2 += w.a * w.a;
        sb += w.b;
        sb2 += w.b * w.b;
        ss += w.a + w.b;
        ss2 += (w.a + w.b) * (w.a + w.b);
    }
    rows.push(mean_row("mean(a)", sa, sa2, nf, 1.0));
    rows.push(mean_row("mean(b)", sb, sb2, nf, 0.0));
    rows.push(mean_row("mean(a+b)", ss, ss2, nf, 1.0));

    let mut rng = RngStream::new(args.seed, 1);
    let mut counts = [0u64; 4];
    for _ in 0..n {
        let m = choose_blend_method(&mut rng, &weights)?;
        counts[BlendMethod::ALL.iter().position(|&t| t == m.tag).expect("known method")] += 1;
    }
    for (i, r) in reference.iter().enumerate() {
        let p = r.probability;
        let observed = counts[i] as f64 / nf;
        let std_err = (p * (1.0 - p) / nf).sqrt();
        rows.push(Row {
            name: format!("freq({})", r.tag.name()),
            observed,
            expected: p,
            std_err,
            pass: (observed - p).abs() <= Z_LIMIT * std_err,
        });
    }

    let mut rng = RngStream::new(args.seed, 2);
    let mut exits = [0u64; 3];
    for _ in 0..n {
        exits[choose_layer_exit(&mut rng) as usize] += 1;
    }
    let expected = nf / 3.0;
    let chi2: f64 = exits.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Two degrees of freedom: the chi-square survival function is exp(-x/2).
    let p_value = (-chi2 / 2.0).exp();
    for (layer, &c) in exits.iter().enumerate() {
        rows.push(Row {
            name: format!("freq(exit {layer})"),
            observed: c as f64 / nf,
            expected: 1.0 / 3.0,
            std_err: (2.0 / 9.0 / nf).sqrt(),
            pass: p_value > EXIT_P_LIMIT,
        });
    }

    println!("{:<22} {:>11} {:>11} {:>10} {:>7}  result", "check", "observed", "expected", "std.err", "|z|");
    for r in &rows {
        let z = if r.std_err > 0.0 { (r.observed - r.expected).abs() / r.std_err } else { 0.0 };
        println!(
            "{:<22} {:>11.6} {:>11.6} {:>10.2e} {:>7.2}  {}",
            r.name,
            r.observed,
            r.expected,
            r.std_err,
            z,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("exit-layer chi-square {chi2:.3} (2 dof), p = {p_value:.4}; n = {n}, seed = {}", args.seed);

    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} checks failed", rows.len())));
    }
    println!("all {} checks passed", rows.len());
    Ok(())
}
