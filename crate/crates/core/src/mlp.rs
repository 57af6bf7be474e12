//! Two-layer perceptron over user embeddings: dim -> hidden (ReLU) -> classes.
//!
//! Parameters live in one flat vector laid out as `w1 | b1 | w2 | b2`, with
//! `w1` stored `dim x hidden` and `w2` stored `hidden x classes`, row-major.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::keyed_rng;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"POLIMLP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dim: usize,
    hidden: usize,
    classes: Vec<String>,
    params: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl MlpModel {
    pub fn zeros(dim: usize, hidden: usize, classes: Vec<String>) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if classes.len() < 2 {
            return Err(Error::Train(format!("need at least 2 classes, got {}", classes.len())));
        }
        let n = dim * hidden + hidden + hidden * classes.len() + classes.len();
        Ok(Self {
            dim,
            hidden,
            classes,
            params: vec![0.0; n],
        })
    }

    /// Uniform He initialization of the first layer; the output layer starts
    /// at zero so that training treats all classes alike.
    pub fn init(dim: usize, hidden: usize, classes: Vec<String>, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(dim, hidden, classes)?;
        let bound = (6.0 / dim as f64).sqrt();
        let mut rng = keyed_rng(seed, &[0]);
        for w in &mut m.params[..dim * hidden] {
            *w = rng.random_range(-bound..bound);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.dim * self.hidden);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden * self.classes.len());
        (w1, b1, w2, b2)
    }

    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        let (w1, b1, _, _) = self.split();
        let mut z = b1.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w1[i * self.hidden..(i + 1) * self.hidden];
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
        z
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        let (_, _, w2, b2) = self.split();
        let k = self.classes.len();
        let mut out = b2.to_vec();
        for (j, &hj) in h.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(&w2[j * k..(j + 1) * k]) {
                *o += hj * w;
            }
        }
        out
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let h: Vec<f64> = self.hidden_pre(x).into_iter().map(|z| z.max(0.0)).collect();
        Ok(self.output(&h))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, xs: &[&[f64]], ys: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let l = self.logits(x)?;
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + l.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - l[y];
        }
        Ok(total / xs.len() as f64)
    }

    // loss contribution and gradient of a single sample, added into `grad`
    fn accumulate(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        let k = self.classes.len();
        let (dim, hidden) = (self.dim, self.hidden);
        let z = self.hidden_pre(x);
        let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        let logits = self.output(&h);
        let p = softmax(&logits);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let mut dl = p;
        dl[y] -= 1.0;

        let (_, _, w2, _) = self.split();
        let (g_w1, rest) = grad.split_at_mut(dim * hidden);
        let (g_b1, rest) = rest.split_at_mut(hidden);
        let (g_w2, g_b2) = rest.split_at_mut(hidden * k);
        for (g, d) in g_b2.iter_mut().zip(&dl) {
            *g += d;
        }
        let mut dz = vec![0.0; hidden];
        for j in 0..hidden {
            let row = &w2[j * k..(j + 1) * k];
            if h[j] != 0.0 {
                for (g, d) in g_w2[j * k..(j + 1) * k].iter_mut().zip(&dl) {
                    *g += h[j] * d;
                }
            }
            if z[j] > 0.0 {
                dz[j] = row.iter().zip(&dl).map(|(w, d)| w * d).sum();
            }
        }
        for (g, d) in g_b1.iter_mut().zip(&dz) {
            *g += d;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (g, d) in g_w1[i * hidden..(i + 1) * hidden].iter_mut().zip(&dz) {
                *g += xi * d;
            }
        }
        lse - logits[y]
    }

    /// Mean loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize]) -> Result<(f64, Vec<f64>)> {
        for x in xs {
            self.check_dim(x)?;
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            loss += self.accumulate(x, y, &mut grad);
        }
        let n = xs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    fn loss_and_grad_parallel(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let (loss, mut grad) = xs
            .par_iter()
            .zip(ys.par_iter())
            .fold(
                || (0.0, vec![0.0; self.params.len()]),
                |(l, mut g), (x, &y)| {
                    let li = self.accumulate(x, y, &mut g);
                    (l + li, g)
                },
            )
            .reduce(
                || (0.0, vec![0.0; self.params.len()]),
                |(la, mut ga), (lb, gb)| {
                    ga.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
                    (la + lb, ga)
                },
            );
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        w.write_all(&CHECKPOINT_MAGIC).map_err(io)?;
        for v in [CHECKPOINT_VERSION, self.dim as u32, self.hidden as u32, self.classes.len() as u32] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for c in &self.classes {
            w.write_all(&(c.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(c.as_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(self.params.len() * 4);
        for &p in &self.params {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Loads f32 weights back into f64.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        fn exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
            r.read_exact(buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
                _ => Error::io("<checkpoint>", e),
            })
        }
        let mut magic = [0u8; 8];
        exact(&mut r, &mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        let mut next = |r: &mut R| -> Result<u32> {
            exact(r, &mut b4)?;
            Ok(u32::from_le_bytes(b4))
        };
        let version = next(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let dim = next(&mut r)? as usize;
        let hidden = next(&mut r)? as usize;
        let k = next(&mut r)? as usize;
        let mut classes = Vec::with_capacity(k.min(1024));
        for _ in 0..k {
            let len = next(&mut r)? as usize;
            let mut s = vec![0u8; len];
            exact(&mut r, &mut s)?;
            classes.push(String::from_utf8(s).map_err(|_| Error::Format("class name is not UTF-8".into()))?);
        }
        let mut m = Self::zeros(dim, hidden, classes).map_err(|e| Error::Format(format!("checkpoint shapes: {e}")))?;
        let mut buf = vec![0u8; m.params.len() * 4];
        exact(&mut r, &mut buf)?;
        for (p, c) in m.params.iter_mut().zip(buf.chunks_exact(4)) {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(Error::Format("checkpoint has non-finite weights".into()));
            }
            *p = v as f64;
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe).map_err(|e| Error::io("<checkpoint>", e))? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Family label (argmax, lowest index on ties) and class probabilities.
pub fn predict_party(model: &MlpModel, embedding: &[f64]) -> Result<(String, Vec<f64>)> {
    let p = model.probabilities(embedding)?;
    Ok((model.classes[argmax(&p)].clone(), p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Minimum topic-relevant tweets per user.
    pub alpha: u64,
    pub alpha_grid: Vec<u64>,
    pub grid_search: bool,
    pub folds: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Data-parallel gradients; faster but not bit-reproducible.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 5,
            alpha_grid: vec![1, 3, 5, 10, 15, 20],
            grid_search: false,
            folds: 5,
            hidden: 128,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    /// Activity threshold by country: 10 for the US, 5 otherwise.
    pub fn for_country(code: &str) -> Self {
        let alpha = if code.eq_ignore_ascii_case("US") { 10 } else { 5 };
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.alpha == 0 {
            return bad("alpha must be positive".into());
        }
        if self.grid_search && self.alpha_grid.is_empty() {
            return bad("alpha grid is empty".into());
        }
        if self.alpha_grid.contains(&0) {
            return bad("alpha grid values must be positive".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be >= 2, got {}", self.folds));
        }
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("hidden, batch_size and epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
    pub deterministic: bool,
}

fn class_index(labels: &[String]) -> Result<(Vec<String>, Vec<usize>)> {
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::Train(format!(
            "training data has {} class(es); need at least 2",
            classes.len()
        )));
    }
    let ys = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();
    Ok((classes, ys))
}

/// Mini-batch SGD with momentum on softmax cross-entropy. Classes are the
/// sorted distinct labels.
pub fn fit(xs: &[Vec<f64>], labels: &[String], cfg: &TrainConfig) -> Result<(MlpModel, FitReport)> {
    cfg.validate()?;
    if xs.len() != labels.len() || xs.is_empty() {
        return Err(Error::Train(format!("{} inputs for {} labels", xs.len(), labels.len())));
    }
    let dim = xs[0].len();
    if let Some(x) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: x.len(),
        });
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("training inputs contain non-finite values".into()));
    }
    let (classes, ys) = class_index(labels)?;
    let mut model = MlpModel::init(dim, cfg.hidden, classes, cfg.seed)?;
    let mut velocity = vec![0.0; model.n_params()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut keyed_rng(cfg.seed, &[1, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = if cfg.parallel {
                model.loss_and_grad_parallel(&bx, &by)
            } else {
                model.loss_and_grad(&bx, &by)?
            };
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "training diverged at epoch {epoch} (loss {loss}); config {cfg:?}"
                )));
            }
            total += loss * batch.len() as f64;
            for ((p, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        epoch_loss.push(total / xs.len() as f64);
    }
    let acc = accuracy(&model, xs, &ys)?;
    Ok((
        model,
        FitReport {
            epoch_loss,
            train_accuracy: acc,
            deterministic: !cfg.parallel,
        },
    ))
}

fn accuracy(model: &MlpModel, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        if argmax(&model.logits(x)?) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / xs.len() as f64)
}

/// Macro-averaged F1 over the classes present in truth or prediction.
pub fn macro_f1(truth: &[String], pred: &[String]) -> f64 {
    let classes: BTreeSet<&String> = truth.iter().chain(pred).collect();
    if classes.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for c in &classes {
        let tp = truth.iter().zip(pred).filter(|(t, p)| t == c && p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(t, p)| t != c && p == c).count() as f64;
        let fneg = truth.iter().zip(pred).filter(|(t, p)| t == c && p != c).count() as f64;
        if tp > 0.0 {
            sum += 2.0 * tp / (2.0 * tp + fp + fneg);
        }
    }
    sum / classes.len() as f64
}

/// Macro-F1 of each of `folds` held-out folds.
pub fn cross_validate(xs: &[Vec<f64>], labels: &[String], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let k = cfg.folds;
    if xs.len() < k {
        return Err(Error::Train(format!("{} samples cannot fill {k} folds", xs.len())));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut keyed_rng(cfg.seed, &[2]));
    let mut scores = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut tx, mut tl, mut vx, mut vl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (pos, &i) in order.iter().enumerate() {
            if pos % k == fold {
                vx.push(xs[i].clone());
                vl.push(labels[i].clone());
            } else {
                tx.push(xs[i].clone());
                tl.push(labels[i].clone());
            }
        }
        let (model, _) = fit(&tx, &tl, cfg)?;
        let pred = vx
            .iter()
            .map(|x| predict_party(&model, x).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        scores.push(macro_f1(&vl, &pred));
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScore {
    pub alpha: u64,
    pub users: usize,
    pub fold_macro_f1: Vec<f64>,
    pub mean_macro_f1: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub alpha: u64,
    pub grid: Vec<AlphaScore>,
    pub train_users: usize,
    pub classes: Vec<String>,
    pub fit: FitReport,
}

/// A labeled user for the activity classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub embedding: Vec<f64>,
    pub label: String,
    pub activity: u64,
}

fn subset(samples: &[Sample], alpha: u64) -> (Vec<Vec<f64>>, Vec<String>) {
    samples
        .iter()
        .filter(|s| s.activity >= alpha)
        .map(|s| (s.embedding.clone(), s.label.clone()))
        .unzip()
}

/// Chooses alpha by the best mean fold macro-F1 (ties to the smaller alpha),
/// or uses `cfg.alpha`, then fits on users with at least alpha tweets.
pub fn train_activity_classifier(samples: &[Sample], cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    let mut grid = Vec::new();
    let alpha = if cfg.grid_search {
        let mut alphas = cfg.alpha_grid.clone();
        alphas.sort_unstable();
        alphas.dedup();
        let mut best: Option<(f64, u64)> = None;
        for a in alphas {
            let (xs, ls) = subset(samples, a);
            let distinct = ls.iter().collect::<BTreeSet<_>>().len();
            let mut score = AlphaScore {
                alpha: a,
                users: xs.len(),
                fold_macro_f1: vec![],
                mean_macro_f1: None,
                skipped: None,
            };
            if xs.len() < cfg.folds || distinct < 2 {
                score.skipped = Some(format!("{} users, {distinct} classes", xs.len()));
            } else {
                match cross_validate(&xs, &ls, cfg) {
                    Ok(f) => {
                        let mean = f.iter().sum::<f64>() / f.len() as f64;
                        if best.is_none_or(|(b, _)| mean > b) {
                            best = Some((mean, a));
                        }
                        score.mean_macro_f1 = Some(mean);
                        score.fold_macro_f1 = f;
                    }
                    Err(Error::Train(msg)) => score.skipped = Some(msg),
                    Err(e) => return Err(e),
                }
            }
            grid.push(score);
        }
        best.map(|b| b.1)
            .ok_or_else(|| Error::Train("no alpha in the grid had enough labeled users".into()))?
    } else {
        cfg.alpha
    };
    let (xs, ls) = subset(samples, alpha);
    if xs.is_empty() {
        return Err(Error::Train(format!("no labeled users with activity >= {alpha}")));
    }
    let (model, fit_report) = fit(&xs, &ls, cfg)?;
    Ok((
        model.clone(),
        TrainReport {
            alpha,
            grid,
            train_users: xs.len(),
            classes: model.classes.clone(),
            fit: fit_report,
        },
    ))
}
