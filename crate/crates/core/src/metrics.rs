//! Robustness and calibration metrics computed from prediction logs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of equal-mass calibration bins.
pub const DEFAULT_CALIBRATION_BINS: usize = 15;

/// One logged prediction. Optional fields are omitted from JSON when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub label: u32,
    /// Classes in descending score order.
    pub ranked_classes: Vec<u32>,
    /// Top-1 score.
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u32>,
}

impl PredictionRecord {
    pub fn top1(&self) -> u32 {
        self.ranked_classes[0]
    }

    pub fn is_correct(&self) -> bool {
        self.top1() == self.label
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Record(format!("{}: {msg}", self.sample_id)));
        if self.ranked_classes.is_empty() {
            return bad("ranked_classes is empty".into());
        }
        let mut seen = HashSet::with_capacity(self.ranked_classes.len());
        if let Some(dup) = self.ranked_classes.iter().find(|c| !seen.insert(**c)) {
            return bad(format!("class {dup} appears twice in ranked_classes"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return bad(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if let Some(s) = self.severity {
            if !(1..=5).contains(&s) {
                return bad(format!("severity {s} outside 1..=5"));
            }
        }
        if self.sequence_id.is_some() != self.frame.is_some() {
            return bad("frame and sequence_id must be given together".into());
        }
        Ok(())
    }
}

/// Parses a JSON-lines log, validating each record. Blank lines are skipped.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading log line {line_no}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Log {
            line: line_no,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Log { line: line_no, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(mut writer: impl Write, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).expect("records always serialize");
        writeln!(writer, "{line}").map_err(|e| Error::io("writing log", e))?;
    }
    Ok(())
}

/// Top-1 error rate per `(corruption, severity)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionGrid {
    pub corruptions: Vec<String>,
    pub severities: Vec<u8>,
    cells: BTreeMap<(String, u8), f64>,
}

impl CorruptionGrid {
    /// Builds the grid, requiring every corruption to appear at every severity.
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self> {
        let mut counts: BTreeMap<(String, u8), (usize, usize)> = BTreeMap::new();
        for r in records {
            let (Some(c), Some(s)) = (&r.corruption, r.severity) else {
                return Err(Error::Record(format!(
                    "{}: corruption and severity are required for mCE",
                    r.sample_id
                )));
            };
            let cell = counts.entry((c.clone(), s)).or_default();
            cell.1 += 1;
            if !r.is_correct() {
                cell.0 += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::IncompleteGrid("no records".into()));
        }
        let corruptions: BTreeSet<String> = counts.keys().map(|(c, _)| c.clone()).collect();
        let severities: BTreeSet<u8> = counts.keys().map(|(_, s)| *s).collect();
        for c in &corruptions {
            for s in &severities {
                if !counts.contains_key(&(c.clone(), *s)) {
                    return Err(Error::IncompleteGrid(format!("no records for {c} at severity {s}")));
                }
            }
        }
        let cells = counts
            .into_iter()
            .map(|(k, (err, total))| (k, err as f64 / total as f64))
            .collect();
        Ok(Self {
            corruptions: corruptions.into_iter().collect(),
            severities: severities.into_iter().collect(),
            cells,
        })
    }

    pub fn error(&self, corruption: &str, severity: u8) -> Option<f64> {
        self.cells.get(&(corruption.to_string(), severity)).copied()
    }

    /// Uniform average over all cells.
    pub fn mean_error(&self) -> f64 {
        self.cells.values().sum::<f64>() / self.cells.len() as f64
    }

    /// Summed error of one corruption across severities.
    pub fn corruption_error(&self, corruption: &str) -> f64 {
        self.severities
            .iter()
            .map(|&s| self.error(corruption, s).unwrap_or(0.0))
            .sum()
    }
}

/// Raw mCE: top-1 error averaged uniformly over the corruption × severity grid.
pub fn mean_corruption_error(records: &[PredictionRecord]) -> Result<f64> {
    Ok(CorruptionGrid::from_records(records)?.mean_error())
}

/// Baseline-normalized mCE: mean over corruptions of
/// `Σ_s E_method(c,s) / Σ_s E_baseline(c,s)`.
pub fn normalized_corruption_error(
    records: &[PredictionRecord],
    baseline: &[PredictionRecord],
) -> Result<f64> {
    let grid = CorruptionGrid::from_records(records)?;
    let base = CorruptionGrid::from_records(baseline)?;
    if grid.corruptions != base.corruptions || grid.severities != base.severities {
        return Err(Error::IncompleteGrid(
            "baseline grid covers different corruptions or severities".into(),
        ));
    }
    let mut total = 0.0;
    for c in &grid.corruptions {
        let denom = base.corruption_error(c);
        if denom == 0.0 {
            return Err(Error::Parameter(format!("baseline has zero error on {c}")));
        }
        total += grid.corruption_error(c) / denom;
    }
    Ok(total / grid.corruptions.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Adjacent frames compared pairwise.
    Temporal,
    /// Every later frame compared with the first.
    NoiseSequence,
}

/// Records grouped by sequence, ordered by frame. Frames must run 0..len.
fn sequences(records: &[PredictionRecord]) -> Result<BTreeMap<&str, Vec<&PredictionRecord>>> {
    let mut groups: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        let Some(seq) = r.sequence_id.as_deref() else {
            return Err(Error::Record(format!("{}: sequence_id is required", r.sample_id)));
        };
        groups.entry(seq).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(Error::Sequence("no sequences".into()));
    }
    for (seq, frames) in groups.iter_mut() {
        frames.sort_by_key(|r| r.frame);
        if frames.len() < 2 {
            return Err(Error::Sequence(format!("sequence {seq} has fewer than 2 frames")));
        }
        for (i, r) in frames.iter().enumerate() {
            if r.frame != Some(i as u32) {
                return Err(Error::Sequence(format!(
                    "sequence {seq}: frames must be contiguous from 0, found {:?} at position {i}",
                    r.frame
                )));
            }
        }
    }
    Ok(groups)
}

/// Mean flip probability pooled over every compared pair of every sequence.
pub fn mean_flip_probability(records: &[PredictionRecord], mode: FlipMode) -> Result<f64> {
    let groups = sequences(records)?;
    let mut flips = 0usize;
    let mut pairs = 0usize;
    for frames in groups.values() {
        match mode {
            FlipMode::Temporal => {
                for w in frames.windows(2) {
                    flips += (w[0].top1() != w[1].top1()) as usize;
                    pairs += 1;
                }
            }
            FlipMode::NoiseSequence => {
                let first = frames[0].top1();
                for r in &frames[1..] {
                    flips += (r.top1() != first) as usize;
                    pairs += 1;
                }
            }
        }
    }
    Ok(flips as f64 / pairs as f64)
}

/// Top-5 distance between two rankings of the same class set.
///
/// With `σ(i)` the rank in `before` of the class at rank `i` in `after`,
/// `d = Σ_{i=1..5} Σ_{j=min(i,σ(i))+1..max(i,σ(i))} 1[1 ≤ j−1 ≤ 5]`.
pub fn top5_distance(before: &[u32], after: &[u32]) -> Result<usize> {
    if before.len() < 5 || after.len() < 5 {
        return Err(Error::Record(format!(
            "top-5 distance needs at least 5 ranked classes, got {} and {}",
            before.len(),
            after.len()
        )));
    }
    if before.len() != after.len() {
        return Err(Error::Record("rankings cover different class universes".into()));
    }
    let rank_before: HashMap<u32, usize> =
        before.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
    let mut d = 0;
    for (i, class) in after.iter().take(5).enumerate() {
        let i = i + 1;
        let Some(&sigma) = rank_before.get(class) else {
            return Err(Error::Record(format!(
                "class {class} is missing from the earlier ranking; rankings cover different class universes"
            )));
        };
        for j in i.min(sigma) + 1..=i.max(sigma) {
            if (1..=5).contains(&(j - 1)) {
                d += 1;
            }
        }
    }
    // Remaining classes must also match for the universes to agree.
    if after.iter().any(|c| !rank_before.contains_key(c)) {
        return Err(Error::Record("rankings cover different class universes".into()));
    }
    Ok(d)
}

/// Mean top-5 distance over all adjacent frame pairs of all sequences.
pub fn mean_top5_distance(records: &[PredictionRecord]) -> Result<f64> {
    let groups = sequences(records)?;
    let mut total = 0usize;
    let mut pairs = 0usize;
    for frames in groups.values() {
        for w in frames.windows(2) {
            total += top5_distance(&w[0].ranked_classes, &w[1].ranked_classes)?;
            pairs += 1;
        }
    }
    Ok(total as f64 / pairs as f64)
}

/// Records with equal confidence, merged.
struct Atom {
    confidence: f64,
    count: usize,
    correct: usize,
}

/// RMS calibration error over `bins` equal-mass bins.
///
/// Records are sorted by confidence and laid out on a mass axis of length
/// `n`; bin `b` covers `[b·n/B, (b+1)·n/B)`. Records sharing a confidence are
/// merged before the split and spread their accuracy evenly over the mass
/// they occupy, so the result does not depend on input order and is
/// unchanged when the whole log is duplicated.
pub fn rms_calibration_error(records: &[PredictionRecord], bins: usize) -> Result<f64> {
    if bins < 1 {
        return Err(Error::Parameter("bins must be at least 1".into()));
    }
    if records.len() < bins {
        return Err(Error::Parameter(format!(
            "{} records cannot fill {bins} bins",
            records.len()
        )));
    }
    let mut order: Vec<(f64, bool)> = records.iter().map(|r| (r.confidence, r.is_correct())).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut atoms: Vec<Atom> = Vec::new();
    for (conf, ok) in order {
        match atoms.last_mut() {
            Some(a) if a.confidence == conf => {
                a.count += 1;
                a.correct += ok as usize;
            }
            _ => atoms.push(Atom { confidence: conf, count: 1, correct: ok as usize }),
        }
    }

    let n = records.len() as f64;
    let width = n / bins as f64;
    let mut sum_sq = 0.0;
    let mut atom = 0;
    let mut atom_start = 0.0;
    for b in 0..bins {
        let lo = b as f64 * width;
        let hi = if b + 1 == bins { n } else { (b + 1) as f64 * width };
        let mut conf = 0.0;
        let mut acc = 0.0;
        // Advance through atoms overlapping [lo, hi).
        let mut k = atom;
        let mut start = atom_start;
        while k < atoms.len() && start < hi {
            let a = &atoms[k];
            let end = start + a.count as f64;
            let overlap = end.min(hi) - start.max(lo);
            if overlap > 0.0 {
                conf += overlap * a.confidence;
                acc += overlap * a.correct as f64 / a.count as f64;
            }
            if end <= hi {
                k += 1;
                start = end;
                atom = k;
                atom_start = start;
            } else {
                break;
            }
        }
        let mass = hi - lo;
        let gap = acc / mass - conf / mass;
        sum_sq += (mass / n) * gap * gap;
    }
    Ok(sum_sq.sqrt())
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Distribution(format!("{name} is empty")));
    }
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Distribution(format!("{name} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Distribution(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

fn kl(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .sum()
}

/// Jensen-Shannon divergence among three predictive distributions, in nats.
pub fn jsd_consistency(p: &[f64], q: &[f64], r: &[f64]) -> Result<f64> {
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    check_distribution(r, "r")?;
    if p.len() != q.len() || p.len() != r.len() {
        return Err(Error::Distribution("distributions have different lengths".into()));
    }
    let m: Vec<f64> = (0..p.len()).map(|i| (p[i] + q[i] + r[i]) / 3.0).collect();
    Ok(((kl(p, &m) + kl(q, &m) + kl(r, &m)) / 3.0).clamp(0.0, 3f64.ln()))
}
