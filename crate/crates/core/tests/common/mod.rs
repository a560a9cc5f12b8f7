//! Independent reference implementations and fixture generators shared by the
//! integration suites. Everything here is deliberately naive: linear scans,
//! nested loops, no shared code with the library's metric paths.

#![allow(dead_code)]

use layermix::metrics::PredictionRecord;
use layermix::{Image, RngStream};

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample KS statistic.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Pearson chi-square goodness-of-fit p-value against expected probabilities.
pub fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Rejection sampler for Beta(alpha, beta) with a uniform proposal; valid
/// whenever the density is bounded (both shapes >= 1).
pub fn beta_rejection(rng: &mut RngStream, alpha: f64, beta: f64) -> f64 {
    let mode = if alpha + beta > 2.0 { (alpha - 1.0) / (alpha + beta - 2.0) } else { 0.5 };
    let kernel = |x: f64| x.powf(alpha - 1.0) * (1.0 - x).powf(beta - 1.0);
    let peak = kernel(mode).max(kernel(0.0)).max(kernel(1.0));
    loop {
        let x = rng.uniform();
        if rng.uniform() * peak <= kernel(x) {
            return x;
        }
    }
}

pub fn noisy_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
    let mut rng = RngStream::new(seed, 0xfeed);
    Image::from_fn(h, w, c, |_, _, _| rng.uniform() as f32)
}

pub fn smooth_image(h: usize, w: usize, c: usize) -> Image {
    Image::from_fn(h, w, c, |y, x, ch| {
        let fy = y as f32 / h as f32;
        let fx = x as f32 / w as f32;
        0.5 + 0.35 * (4.0 * fx + 3.0 * fy + ch as f32).sin() * (2.5 * fy - fx).cos()
    })
}

fn base_record(id: String, label: u32, ranked: Vec<u32>, confidence: f64) -> PredictionRecord {
    PredictionRecord {
        sample_id: id,
        label,
        ranked_classes: ranked,
        confidence,
        corruption: None,
        severity: None,
        sequence_id: None,
        frame: None,
    }
}

fn permutation(rng: &mut RngStream, n: u32) -> Vec<u32> {
    let mut v: Vec<u32> = (0..n).collect();
    for i in (1..v.len()).rev() {
        let j = rng.index(i + 1);
        v.swap(i, j);
    }
    v
}

/// A small random log: a complete corruption grid plus a few sequences.
/// Rankings are permutations of 8 classes with a sticky top class so flips
/// are neither always nor never present. Confidences come from a coarse
/// grid so ties occur.
pub fn random_log(seed: u64) -> (Vec<PredictionRecord>, Vec<PredictionRecord>) {
    let mut rng = RngStream::new(seed, 77);
    let classes = 8;
    let corruptions = ["fog", "snow", "blur", "noise"];
    let n_corr = 1 + rng.index(3);
    let n_sev = 1 + rng.index(3);
    let mut grid = Vec::new();
    for c in &corruptions[..n_corr] {
        for s in 1..=n_sev as u8 {
            for i in 0..1 + rng.index(4) {
                let ranked = permutation(&mut rng, classes);
                let label = if rng.bernoulli(0.5) { ranked[0] } else { rng.index(classes as usize) as u32 };
                let conf = (1 + rng.index(10)) as f64 / 10.0;
                grid.push(PredictionRecord {
                    corruption: Some(c.to_string()),
                    severity: Some(s),
                    ..base_record(format!("{seed}-{c}-{s}-{i}"), label, ranked, conf)
                });
            }
        }
    }
    let mut seqs = Vec::new();
    for s in 0..1 + rng.index(4) {
        let len = 2 + rng.index(5);
        let mut ranked = permutation(&mut rng, classes);
        for f in 0..len {
            if rng.bernoulli(0.4) {
                let i = rng.index(classes as usize);
                let j = rng.index(classes as usize);
                ranked.swap(i, j);
            }
            let conf = rng.uniform();
            seqs.push(PredictionRecord {
                sequence_id: Some(format!("seq{s}")),
                frame: Some(f as u32),
                ..base_record(format!("{seed}-seq{s}-{f}"), ranked[0], ranked.clone(), conf)
            });
        }
    }
    // Shuffle so nothing relies on input order.
    let grid_order = permutation(&mut rng, grid.len() as u32);
    let seq_order = permutation(&mut rng, seqs.len() as u32);
    (
        grid_order.iter().map(|&i| grid[i as usize].clone()).collect(),
        seq_order.iter().map(|&i| seqs[i as usize].clone()).collect(),
    )
}

pub fn naive_mce(records: &[PredictionRecord]) -> f64 {
    let mut corruptions: Vec<String> = Vec::new();
    let mut severities: Vec<u8> = Vec::new();
    for r in records {
        let c = r.corruption.clone().unwrap();
        if !corruptions.contains(&c) {
            corruptions.push(c);
        }
        let s = r.severity.unwrap();
        if !severities.contains(&s) {
            severities.push(s);
        }
    }
    let mut sum = 0.0;
    for c in &corruptions {
        for s in &severities {
            let mut wrong = 0;
            let mut total = 0;
            for r in records {
                if r.corruption.as_ref() == Some(c) && r.severity == Some(*s) {
                    total += 1;
                    if r.ranked_classes[0] != r.label {
                        wrong += 1;
                    }
                }
            }
            assert!(total > 0);
            sum += wrong as f64 / total as f64;
        }
    }
    sum / (corruptions.len() * severities.len()) as f64
}

fn naive_frames<'a>(records: &'a [PredictionRecord]) -> Vec<Vec<&'a PredictionRecord>> {
    let mut ids: Vec<String> = Vec::new();
    for r in records {
        let id = r.sequence_id.clone().unwrap();
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let mut out = Vec::new();
    for id in ids {
        let mut frames = Vec::new();
        let mut f = 0u32;
        loop {
            let mut found = None;
            for r in records {
                if r.sequence_id.as_deref() == Some(id.as_str()) && r.frame == Some(f) {
                    found = Some(r);
                }
            }
            match found {
                Some(r) => frames.push(r),
                None => break,
            }
            f += 1;
        }
        out.push(frames);
    }
    out
}

pub fn naive_mfp_temporal(records: &[PredictionRecord]) -> f64 {
    let mut flips = 0.0;
    let mut pairs = 0.0;
    for frames in naive_frames(records) {
        for i in 1..frames.len() {
            if frames[i].ranked_classes[0] != frames[i - 1].ranked_classes[0] {
                flips += 1.0;
            }
            pairs += 1.0;
        }
    }
    flips / pairs
}

pub fn naive_mfp_noise(records: &[PredictionRecord]) -> f64 {
    let mut flips = 0.0;
    let mut pairs = 0.0;
    for frames in naive_frames(records) {
        for i in 1..frames.len() {
            if frames[i].ranked_classes[0] != frames[0].ranked_classes[0] {
                flips += 1.0;
            }
            pairs += 1.0;
        }
    }
    flips / pairs
}

pub fn naive_t5d(before: &[u32], after: &[u32]) -> f64 {
    let mut d = 0.0;
    for i in 1..=5usize {
        let class = after[i - 1];
        let mut sigma = 0;
        for (pos, &c) in before.iter().enumerate() {
            if c == class {
                sigma = pos + 1;
            }
        }
        assert!(sigma > 0);
        let lo = if i < sigma { i } else { sigma };
        let hi = if i < sigma { sigma } else { i };
        let mut j = lo + 1;
        while j <= hi {
            if j >= 2 && j - 1 <= 5 {
                d += 1.0;
            }
            j += 1;
        }
    }
    d
}

pub fn naive_mt5d(records: &[PredictionRecord]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for frames in naive_frames(records) {
        for i in 1..frames.len() {
            total += naive_t5d(&frames[i - 1].ranked_classes, &frames[i].ranked_classes);
            pairs += 1.0;
        }
    }
    total / pairs
}

/// Equal-mass calibration bins, computed record by record: each record owns
/// a slice of the mass axis equal to its tie group's interval divided evenly.
pub fn naive_rms(records: &[PredictionRecord], bins: usize) -> f64 {
    let n = records.len() as f64;
    let mut sum_sq = 0.0;
    for b in 0..bins {
        let lo = b as f64 * n / bins as f64;
        let hi = if b + 1 == bins { n } else { (b + 1) as f64 * n / bins as f64 };
        let mut conf = 0.0;
        let mut acc = 0.0;
        for r in records {
            let mut below: f64 = 0.0;
            let mut ties = 0.0;
            let mut ties_correct = 0.0;
            for s in records {
                if s.confidence < r.confidence {
                    below += 1.0;
                } else if s.confidence == r.confidence {
                    ties += 1.0;
                    if s.ranked_classes[0] == s.label {
                        ties_correct += 1.0;
                    }
                }
            }
            let start = below;
            let end = below + ties;
            let overlap = (end.min(hi) - start.max(lo)).max(0.0);
            // This record's share of the group's overlap.
            let share = overlap / ties;
            conf += share * r.confidence;
            acc += share * ties_correct / ties;
        }
        let mass = hi - lo;
        sum_sq += (mass / n) * (acc / mass - conf / mass).powi(2);
    }
    sum_sq.sqrt()
}

/// JSD through the entropy identity `H(M) − mean H(P_i)`.
pub fn naive_jsd(p: &[f64], q: &[f64], r: &[f64]) -> f64 {
    let h = |v: &[f64]| -> f64 {
        let mut s = 0.0;
        for &x in v {
            if x > 0.0 {
                s -= x * x.ln();
            }
        }
        s
    };
    let mut m = vec![0.0; p.len()];
    for i in 0..p.len() {
        m[i] = (p[i] + q[i] + r[i]) / 3.0;
    }
    h(&m) - (h(p) + h(q) + h(r)) / 3.0
}

pub fn random_distribution(rng: &mut RngStream, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k)
        .map(|_| if rng.bernoulli(0.2) { 0.0 } else { -rng.uniform().max(1e-300).ln() })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}
