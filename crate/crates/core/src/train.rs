//! Training loops: channel-wise filter learning and node classification.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, glorot, AdamState, ParamId, ParamStore, Tape, Tensor, Var};
use crate::basis::{named_recurrence, BasisKind};
use crate::error::{Error, Result};
use crate::filtering::{
    fixed_basis_vectors, optbasis_vectors, BasisVectors, SignalMatrix, NORM_CLAMP, SQRT_BETA_CLAMP,
};
use crate::graph::SparseMatrix;

/// Optimizer and stopping settings shared by both training loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Stop once `|loss_t - loss_{t-1}|` on the training loss drops below
    /// this value.
    pub loss_delta_stop: Option<f64>,
    /// Early-stopping patience on the validation loss.
    pub patience: usize,
    pub seed: u64,
    pub dropout: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::filter_learning()
    }
}

impl TrainConfig {
    pub fn filter_learning() -> Self {
        Self {
            lr: 0.1,
            weight_decay: 5e-4,
            max_epochs: 500,
            loss_delta_stop: Some(1e-4),
            patience: 300,
            seed: 0,
            dropout: 0.0,
            hidden: 64,
        }
    }

    pub fn classification() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            max_epochs: 1000,
            loss_delta_stop: None,
            patience: 300,
            seed: 0,
            dropout: 0.5,
            hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be at least 1".into()));
        }
        if let Some(d) = self.loss_delta_stop {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("loss_delta_stop must be non-negative, got {d}")));
            }
        }
        Ok(())
    }
}

/// `N x d` tensor holding the columns of a signal matrix.
pub fn signal_to_tensor(x: &SignalMatrix) -> Tensor {
    let cols: Vec<&[f64]> = (0..x.channels()).map(|l| x.column(l)).collect();
    Tensor::from_columns(&cols).expect("equal columns")
}

pub fn tensor_to_signal(t: &Tensor) -> SignalMatrix {
    let cols = (0..t.cols()).map(|j| t.column(j)).collect();
    SignalMatrix::from_columns(cols).expect("finite tensor")
}

/// Stacks `V[l][k]` into `K + 1` tensors of shape `N x d`.
pub fn basis_tensors(v: &BasisVectors) -> Vec<Tensor> {
    (0..=v.order())
        .map(|k| {
            let cols: Vec<&[f64]> = (0..v.channels()).map(|l| v.vector(l, k)).collect();
            Tensor::from_columns(&cols).expect("equal columns")
        })
        .collect()
}

/// Per-channel polynomial filter whose coefficients live in a [`ParamStore`].
///
/// Parameters are stored order-major: `alpha` is `(K+1) x d`; Favard also
/// registers `sqrt_beta` (`(K+2) x d`, ones) and `gamma` (`(K+1) x d`,
/// zeros).
#[derive(Debug, Clone)]
pub struct FilterModel {
    pub kind: BasisKind,
    pub order: usize,
    pub channels: usize,
    pub alpha: ParamId,
    pub favard: Option<(ParamId, ParamId)>,
}

impl FilterModel {
    /// Registers the filter parameters with `alpha = (1, 0, ..., 0)`.
    pub fn register(store: &mut ParamStore, prefix: &str, kind: BasisKind, order: usize, channels: usize) -> Self {
        let mut alpha = Tensor::zeros(order + 1, channels);
        alpha.data_mut()[..channels].fill(1.0);
        let alpha = store.add(&format!("{prefix}alpha"), alpha);
        let favard = matches!(kind, BasisKind::Favard(_)).then(|| {
            (
                store.add(&format!("{prefix}sqrt_beta"), Tensor::filled(order + 2, channels, 1.0)),
                store.add(&format!("{prefix}gamma"), Tensor::zeros(order + 1, channels)),
            )
        });
        Self {
            kind,
            order,
            channels,
            alpha,
            favard,
        }
    }

    /// `sum_k v_k * alpha_k` over precomputed basis tensors.
    pub fn combine<'g>(&self, tape: &mut Tape<'g>, store: &ParamStore, basis: &[Var]) -> Result<Var> {
        if basis.len() != self.order + 1 {
            return Err(Error::invalid(format!(
                "expected {} basis tensors, got {}",
                self.order + 1,
                basis.len()
            )));
        }
        let alpha = tape.param(store, self.alpha);
        let mut z: Option<Var> = None;
        for (k, &v) in basis.iter().enumerate() {
            let a = tape.take_row(alpha, k)?;
            let term = tape.scale_cols(v, a)?;
            z = Some(match z {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        Ok(z.expect("order >= 0"))
    }

    /// Basis vectors of `x` recorded on the tape, so gradients flow into `x`.
    pub fn basis_on_tape<'g>(&self, tape: &mut Tape<'g>, store: &ParamStore, p: &'g SparseMatrix, x: Var) -> Result<Vec<Var>> {
        let k = self.order;
        let mut out = Vec::with_capacity(k + 1);
        match &self.kind {
            BasisKind::Favard(_) => {
                let (sb_id, g_id) = self.favard.expect("favard parameters registered");
                let sb = tape.param(store, sb_id);
                let gm = tape.param(store, g_id);
                let mut sbs = Vec::with_capacity(k + 1);
                for i in 0..=k {
                    let row = tape.take_row(sb, i)?;
                    sbs.push(tape.clamp_floor(row, SQRT_BETA_CLAMP));
                }
                out.push(tape.div_cols(x, sbs[0])?);
                for i in 0..k {
                    let cur = out[i];
                    let px = tape.spmv_const(p, cur)?;
                    let g = tape.take_row(gm, i)?;
                    let gx = tape.scale_cols(cur, g)?;
                    let mut num = tape.sub(px, gx)?;
                    if i > 0 {
                        let bx = tape.scale_cols(out[i - 1], sbs[i])?;
                        num = tape.sub(num, bx)?;
                    }
                    out.push(tape.div_cols(num, sbs[i + 1])?);
                }
            }
            BasisKind::OptBasis => {
                let nx = tape.col_norm(x);
                let nx = tape.clamp_floor(nx, NORM_CLAMP);
                out.push(tape.div_cols(x, nx)?);
                for i in 0..k {
                    let cur = out[i];
                    let vs = tape.spmv_const(p, cur)?;
                    let g = tape.col_dot(vs, cur)?;
                    let gv = tape.scale_cols(cur, g)?;
                    let mut perp = tape.sub(vs, gv)?;
                    if i > 0 {
                        let prev = out[i - 1];
                        let h = tape.col_dot(vs, prev)?;
                        let hv = tape.scale_cols(prev, h)?;
                        perp = tape.sub(perp, hv)?;
                    }
                    let nb = tape.col_norm(perp);
                    let nb = tape.clamp_floor(nb, NORM_CLAMP);
                    out.push(tape.div_cols(perp, nb)?);
                }
            }
            BasisKind::Bernstein => {
                let mut lap = vec![x];
                for j in 0..k {
                    let px = tape.spmv_const(p, lap[j])?;
                    lap.push(tape.sub(lap[j], px)?);
                }
                let scale = 0.5f64.powi(k as i32);
                for (j, &l) in lap.iter().enumerate() {
                    let mut v = l;
                    for _ in 0..k - j {
                        let pv = tape.spmv_const(p, v)?;
                        v = tape.add(v, pv)?;
                    }
                    out.push(tape.scale(v, binomial(k, j) * scale));
                }
            }
            kind => {
                let rec = named_recurrence(kind, k)?.expect("recurrence-representable");
                out.push(tape.scale(x, rec.p0));
                for i in 0..k {
                    let cur = out[i];
                    let pc = tape.spmv_const(p, cur)?;
                    let a = tape.scale(pc, rec.a[i]);
                    let b = tape.scale(cur, rec.b[i]);
                    let mut next = tape.add(a, b)?;
                    if i > 0 && rec.c[i] != 0.0 {
                        let c = tape.scale(out[i - 1], rec.c[i]);
                        next = tape.add(next, c)?;
                    }
                    out.push(next);
                }
            }
        }
        Ok(out)
    }

    /// Filters `x` entirely on the tape.
    pub fn apply<'g>(&self, tape: &mut Tape<'g>, store: &ParamStore, p: &'g SparseMatrix, x: Var) -> Result<Var> {
        let basis = self.basis_on_tape(tape, store, p, x)?;
        self.combine(tape, store, &basis)
    }

    /// Basis vectors of a constant signal, computed outside the tape.
    /// `None` for Favard, whose basis depends on trainable coefficients.
    pub fn constant_basis(&self, p: &SparseMatrix, x: &SignalMatrix) -> Result<Option<Vec<Tensor>>> {
        let k = self.order;
        let channels: Vec<Vec<Vec<f64>>> = match &self.kind {
            BasisKind::Favard(_) => return Ok(None),
            BasisKind::OptBasis => (0..x.channels())
                .map(|l| optbasis_vectors(p, x.column(l), k).map(|(v, _)| v))
                .collect::<Result<_>>()?,
            kind => (0..x.channels())
                .map(|l| fixed_basis_vectors(p, x.column(l), kind, k))
                .collect::<Result<_>>()?,
        };
        let tensors = (0..=k)
            .map(|kk| {
                let cols: Vec<&[f64]> = channels.iter().map(|c| c[kk].as_slice()).collect();
                Tensor::from_columns(&cols).expect("equal columns")
            })
            .collect();
        Ok(Some(tensors))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossDelta,
    MaxEpochs,
    Patience,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct FilterLearningResult {
    /// Training loss at each epoch, measured before that epoch's update.
    pub curve: Vec<f64>,
    pub final_loss: f64,
    pub stop: StopReason,
    pub params: ParamStore,
    pub model: FilterModel,
}

/// Filter-learning objective `0.5 ||Z - Y||^2` and its gradients.
pub struct FilterObjective<'g> {
    p: &'g SparseMatrix,
    x: Tensor,
    y: Tensor,
    basis: Option<Vec<Tensor>>,
    pub model: FilterModel,
}

impl<'g> FilterObjective<'g> {
    pub fn new(p: &'g SparseMatrix, x: &SignalMatrix, y: &SignalMatrix, kind: BasisKind, k: usize, store: &mut ParamStore) -> Result<Self> {
        if x.n_nodes() != p.dim() || y.n_nodes() != p.dim() || x.channels() != y.channels() {
            return Err(Error::invalid("signal, target and operator shapes disagree"));
        }
        let model = FilterModel::register(store, "", kind, k, x.channels());
        let basis = model.constant_basis(p, x)?;
        Ok(Self {
            p,
            x: signal_to_tensor(x),
            y: signal_to_tensor(y),
            basis,
            model,
        })
    }

    pub fn forward(&self, store: &ParamStore) -> Result<Tensor> {
        let mut tape = Tape::new();
        let z = self.output(&mut tape, store)?;
        Ok(tape.value(z).clone())
    }

    fn output(&self, tape: &mut Tape<'g>, store: &ParamStore) -> Result<Var> {
        match &self.basis {
            Some(b) => {
                let vars: Vec<Var> = b.iter().map(|t| tape.constant(t.clone())).collect();
                self.model.combine(tape, store, &vars)
            }
            None => {
                let x = tape.constant(self.x.clone());
                self.model.apply(tape, store, self.p, x)
            }
        }
    }

    pub fn loss_and_grad(&self, store: &ParamStore) -> Result<(f64, crate::autodiff::Gradients)> {
        let mut tape = Tape::new();
        let z = self.output(&mut tape, store)?;
        let loss = tape.mse(z, &self.y)?;
        Ok((tape.value(loss).item(), tape.backward(loss, store)?))
    }
}

/// Learns per-channel filter parameters so that the filtered `x` matches
/// `y`. Only `alpha` is trainable except for Favard, which also learns its
/// recurrence.
pub fn train_filter_learning(
    p: &SparseMatrix,
    x: &SignalMatrix,
    y: &SignalMatrix,
    kind: BasisKind,
    k: usize,
    cfg: &TrainConfig,
) -> Result<FilterLearningResult> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let obj = FilterObjective::new(p, x, y, kind, k, &mut store)?;
    let mut adam = AdamState::new(&store);
    let mut curve = Vec::with_capacity(cfg.max_epochs);
    let mut stop = StopReason::MaxEpochs;
    for _ in 0..cfg.max_epochs {
        let (loss, grads) = obj.loss_and_grad(&store)?;
        if !loss.is_finite() {
            stop = StopReason::NonFinite;
            break;
        }
        let prev = curve.last().copied();
        curve.push(loss);
        if let (Some(prev), Some(tol)) = (prev, cfg.loss_delta_stop) {
            if (loss - prev).abs() < tol {
                stop = StopReason::LossDelta;
                break;
            }
        }
        adam_step(&mut store, &grads, &mut adam, cfg.lr, cfg.weight_decay);
    }
    let final_loss = curve.last().copied().unwrap_or(f64::NAN);
    Ok(FilterLearningResult {
        curve,
        final_loss,
        stop,
        params: store,
        model: obj.model,
    })
}

/// Node-classification architectures.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `MLP0 -> filter -> MLP1` with the given basis (Favard, OptBasis or a
    /// fixed basis).
    Filter(BasisKind),
    /// Optimal basis over the raw features with precomputable basis vectors,
    /// followed by a two-layer MLP.
    OptBasisScaled,
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::Filter(b) => b.name(),
            ModelKind::OptBasisScaled => "optbasis-scaled".into(),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("optbasis-scaled") {
            return Ok(ModelKind::OptBasisScaled);
        }
        BasisKind::from_str(s)
            .map(ModelKind::Filter)
            .map_err(|_| Error::Config(format!("unknown model {s:?}")))
    }
}

/// Train/validation/test node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Inputs for node classification.
pub struct ClassificationData<'g> {
    pub p: &'g SparseMatrix,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

/// A classifier's parameters and layout.
pub struct Classifier {
    pub kind: ModelKind,
    pub store: ParamStore,
    filter: FilterModel,
    w0: Option<(ParamId, ParamId)>,
    w1: (ParamId, ParamId),
    w2: Option<(ParamId, ParamId)>,
}

impl Classifier {
    pub fn new(kind: ModelKind, k: usize, n_features: usize, n_classes: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let dense = |store: &mut ParamStore, name: &str, i: usize, o: usize, rng: &mut ChaCha8Rng| {
            (
                store.add(&format!("{name}.weight"), glorot(i, o, rng)),
                store.add(&format!("{name}.bias"), Tensor::zeros(1, o)),
            )
        };
        match kind {
            ModelKind::Filter(ref basis) => {
                let w0 = dense(&mut store, "mlp0", n_features, hidden, &mut rng);
                let filter = FilterModel::register(&mut store, "filter.", basis.clone(), k, hidden);
                let w1 = dense(&mut store, "mlp1", hidden, n_classes, &mut rng);
                Self {
                    kind,
                    store,
                    filter,
                    w0: Some(w0),
                    w1,
                    w2: None,
                }
            }
            ModelKind::OptBasisScaled => {
                let filter = FilterModel::register(&mut store, "filter.", BasisKind::OptBasis, k, n_features);
                let w1 = dense(&mut store, "mlp1", n_features, hidden, &mut rng);
                let w2 = dense(&mut store, "mlp2", hidden, n_classes, &mut rng);
                Self {
                    kind,
                    store,
                    filter,
                    w0: None,
                    w1,
                    w2: Some(w2),
                }
            }
        }
    }

    pub fn order(&self) -> usize {
        self.filter.order
    }

    /// Logits for every node. `basis` must hold the precomputed basis for the
    /// scaled model and is ignored otherwise. Dropout is active when `rng`
    /// is given.
    pub fn forward<'g>(
        &self,
        tape: &mut Tape<'g>,
        store: &ParamStore,
        data: &ClassificationData<'g>,
        basis: Option<&[Tensor]>,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let mut drop = |tape: &mut Tape<'g>, v: Var| -> Result<Var> {
            match rng.as_deref_mut() {
                Some(r) => tape.dropout(v, dropout, r),
                None => Ok(v),
            }
        };
        match self.kind {
            ModelKind::Filter(_) => {
                let (w0, b0) = self.w0.expect("mlp0");
                let x = tape.constant(data.features.clone());
                let x = drop(tape, x)?;
                let (w, b) = (tape.param(store, w0), tape.param(store, b0));
                let h = tape.dense_affine(x, w, b)?;
                let h = tape.relu(h);
                let z = self.filter.apply(tape, store, data.p, h)?;
                let z = tape.relu(z);
                let z = drop(tape, z)?;
                let (w, b) = (tape.param(store, self.w1.0), tape.param(store, self.w1.1));
                tape.dense_affine(z, w, b)
            }
            ModelKind::OptBasisScaled => {
                let basis = basis.ok_or_else(|| Error::invalid("scaled model needs its basis vectors"))?;
                let vars: Vec<Var> = basis.iter().map(|t| tape.constant(t.clone())).collect();
                let z = self.filter.combine(tape, store, &vars)?;
                let z = drop(tape, z)?;
                let (w, b) = (tape.param(store, self.w1.0), tape.param(store, self.w1.1));
                let h = tape.dense_affine(z, w, b)?;
                let h = tape.relu(h);
                let h = drop(tape, h)?;
                let (w2, b2) = self.w2.expect("mlp2");
                let (w, b) = (tape.param(store, w2), tape.param(store, b2));
                tape.dense_affine(h, w, b)
            }
        }
    }
}

/// Outcome of one classification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// Epoch (0-based) with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub stop: StopReason,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy(logits: &Tensor, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let hits = rows.iter().filter(|&&r| argmax(logits.row(r)) == labels[r]).count();
    hits as f64 / rows.len() as f64
}

fn check_split(split: &Split, n: usize) -> Result<()> {
    for (name, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if let Some(i) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::Data(format!("{name} split references node {i} but the graph has {n} nodes")));
        }
    }
    if split.train.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    if split.val.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    Ok(())
}

/// Trains a classifier with Adam on the training cross-entropy and early
/// stopping on the validation loss. Reported accuracies are those of the
/// epoch with the lowest validation loss.
pub fn train_node_classifier(
    kind: ModelKind,
    data: &ClassificationData<'_>,
    split: &Split,
    k: usize,
    basis: Option<&[Tensor]>,
    cfg: &TrainConfig,
) -> Result<ClassificationResult> {
    cfg.validate()?;
    let n = data.p.dim();
    if data.features.rows() != n || data.labels.len() != n {
        return Err(Error::Data(format!(
            "{} feature rows and {} labels for {n} nodes",
            data.features.rows(),
            data.labels.len()
        )));
    }
    if let Some(&y) = data.labels.iter().find(|&&y| y >= data.n_classes) {
        return Err(Error::Data(format!("label {y} but only {} classes", data.n_classes)));
    }
    check_split(split, n)?;
    let owned;
    let basis = match (&kind, basis) {
        (ModelKind::OptBasisScaled, None) => {
            let v = crate::filtering::precompute_basis(data.p, &tensor_to_signal(&data.features), k)?;
            owned = basis_tensors(&v);
            Some(owned.as_slice())
        }
        (_, b) => b,
    };
    let model = Classifier::new(kind, k, data.features.cols(), data.n_classes, cfg.hidden, cfg.seed);
    let mut store = model.store.clone();
    let mut adam = AdamState::new(&store);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut best: Option<(usize, f64, f64, f64)> = None;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &store, data, basis, cfg.dropout, Some(&mut rng))?;
        let loss = tape.softmax_cross_entropy(logits, &data.labels, &split.train)?;
        let lv = tape.value(loss).item();
        if !lv.is_finite() {
            stop = StopReason::NonFinite;
            break;
        }
        let grads = tape.backward(loss, &store)?;
        adam_step(&mut store, &grads, &mut adam, cfg.lr, cfg.weight_decay);
        train_loss.push(lv);

        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &store, data, basis, 0.0, None)?;
        let vl = tape.softmax_cross_entropy(logits, &data.labels, &split.val)?;
        let vl = tape.value(vl).item();
        val_loss.push(vl);
        let out = tape.value(logits);
        if best.is_none_or(|b| vl < b.1) {
            best = Some((
                epoch,
                vl,
                accuracy(out, &data.labels, &split.val),
                accuracy(out, &data.labels, &split.test),
            ));
        }
        let best_epoch = best.expect("set above").0;
        if epoch - best_epoch >= cfg.patience {
            stop = StopReason::Patience;
            break;
        }
    }
    let (best_epoch, best_val_loss, val_accuracy, test_accuracy) =
        best.ok_or_else(|| Error::Numerical("training diverged in the first epoch".into()))?;
    Ok(ClassificationResult {
        best_epoch,
        best_val_loss,
        val_accuracy,
        test_accuracy,
        epochs_run: train_loss.len(),
        stop,
        train_loss,
        val_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, sgd_step};
    use crate::filtering::{favard_filtering, optbasis_filtering, CoefficientMatrix};
    use crate::graph::{normalized_adjacency, path_graph, random_connected_graph, IsolatedNodes};
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, d: usize) -> (SparseMatrix, SignalMatrix, SignalMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(n, n, &mut rng).unwrap();
        let p = normalized_adjacency(&g, IsolatedNodes::Reject).unwrap();
        let mut col = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = SignalMatrix::from_columns((0..d).map(|_| col()).collect()).unwrap();
        let y = SignalMatrix::from_columns((0..d).map(|_| col()).collect()).unwrap();
        (p, x, y)
    }

    #[test]
    fn tape_filters_match_direct_filters() {
        let (p, x, _) = random_problem(3, 15, 2);
        let mut store = ParamStore::new();
        let fm = FilterModel::register(&mut store, "", BasisKind::OptBasis, 4, 2);
        let alpha: Vec<f64> = (0..10).map(|i| 0.3 * i as f64 - 1.0).collect();
        store.get_mut(fm.alpha).data_mut().copy_from_slice(&alpha);
        let mut tape = Tape::new();
        let xv = tape.constant(signal_to_tensor(&x));
        let z = fm.apply(&mut tape, &store, &p, xv).unwrap();
        let rows: Vec<Vec<f64>> = (0..2).map(|l| (0..5).map(|k| alpha[k * 2 + l]).collect()).collect();
        let coef = CoefficientMatrix::from_rows(rows).unwrap();
        let (direct, _) = optbasis_filtering(&p, &x, &coef, false).unwrap();
        assert!(tensor_to_signal(tape.value(z)).max_abs_diff(&direct) < 1e-12);

        let mut store = ParamStore::new();
        let fm = FilterModel::register(&mut store, "", BasisKind::Favard(crate::basis::RecurrenceCoefficients::unit(0)), 3, 2);
        let (sb, gm) = fm.favard.unwrap();
        store.get_mut(sb).data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.6 + 0.05 * i as f64);
        store.get_mut(gm).data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64 - 0.2);
        store.get_mut(fm.alpha).data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 1.0 - 0.2 * i as f64);
        let mut tape = Tape::new();
        let xv = tape.constant(signal_to_tensor(&x));
        let z = fm.apply(&mut tape, &store, &p, xv).unwrap();
        let to_rows = |t: &Tensor| crate::dense::DenseMatrix::from_rows(&(0..2).map(|l| t.column(l)).collect::<Vec<_>>()).unwrap();
        let alpha_rows = to_rows(store.get(fm.alpha));
        let coef = CoefficientMatrix::from_rows((0..2).map(|l| alpha_rows.row(l).to_vec()).collect()).unwrap();
        let direct = favard_filtering(&p, &x, &to_rows(store.get(sb)), &to_rows(store.get(gm)), &coef).unwrap();
        assert!(tensor_to_signal(tape.value(z)).max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn identity_target_is_learned() {
        let (p, x, _) = random_problem(8, 20, 1);
        let cfg = TrainConfig {
            loss_delta_stop: None,
            weight_decay: 0.0,
            ..TrainConfig::filter_learning()
        };
        for kind in [BasisKind::Monomial, BasisKind::Chebyshev, BasisKind::OptBasis] {
            let r = train_filter_learning(&p, &x, &x, kind.clone(), 3, &cfg).unwrap();
            assert!(r.final_loss <= 1e-6, "{kind}: {}", r.final_loss);
        }
    }

    #[test]
    fn optbasis_one_gradient_step_is_optimal() {
        let (p, x, y) = random_problem(12, 25, 2);
        let mut store = ParamStore::new();
        let obj = FilterObjective::new(&p, &x, &y, BasisKind::OptBasis, 6, &mut store).unwrap();
        store.get_mut(obj.model.alpha).data_mut().fill(0.0);
        let (_, g) = obj.loss_and_grad(&store).unwrap();
        sgd_step(&mut store, &g, 1.0, 0.0);
        let (_, g) = obj.loss_and_grad(&store).unwrap();
        assert!(g.norm() <= 1e-8, "{}", g.norm());
    }

    #[test]
    fn filter_learning_gradients() {
        let p = normalized_adjacency(&path_graph(3).unwrap(), IsolatedNodes::Reject).unwrap();
        let x = SignalMatrix::from_vector(vec![1.0, -0.5, 2.0]);
        let y = SignalMatrix::from_vector(vec![0.2, 0.1, -0.3]);
        let mut store = ParamStore::new();
        let obj = FilterObjective::new(&p, &x, &y, BasisKind::Favard(crate::basis::RecurrenceCoefficients::unit(0)), 2, &mut store).unwrap();
        let (sb, gm) = obj.model.favard.unwrap();
        store.get_mut(sb).data_mut().copy_from_slice(&[0.9, 1.1, 0.8, 1.0]);
        store.get_mut(gm).data_mut().copy_from_slice(&[0.1, -0.2, 0.05]);
        store.get_mut(obj.model.alpha).data_mut().copy_from_slice(&[0.5, -0.3, 0.7]);
        let err = grad_check(&store, |s| obj.loss_and_grad(s)).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn train_is_deterministic_and_respects_patience() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_connected_graph(30, 40, &mut rng).unwrap();
        let p = normalized_adjacency(&g, IsolatedNodes::Reject).unwrap();
        let feats = Tensor::from_vec(30, 4, (0..120).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let data = ClassificationData {
            p: &p,
            features: feats,
            labels,
            n_classes: 3,
        };
        let split = Split {
            train: (0..15).collect(),
            val: (15..22).collect(),
            test: (22..30).collect(),
        };
        let cfg = TrainConfig {
            max_epochs: 400,
            patience: 5,
            hidden: 8,
            ..TrainConfig::classification()
        };
        let kind = ModelKind::from_str("favard").unwrap();
        let a = train_node_classifier(kind.clone(), &data, &split, 3, None, &cfg).unwrap();
        let b = train_node_classifier(kind, &data, &split, 3, None, &cfg).unwrap();
        assert_eq!(a, b);
        if a.stop == StopReason::Patience {
            assert_eq!(a.epochs_run - 1 - a.best_epoch, cfg.patience);
            assert!(a.val_loss[a.best_epoch + 1..].iter().all(|&v| v >= a.best_val_loss));
        }
        assert!(ModelKind::from_str("gcn").is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::filter_learning().validate().is_ok());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::classification()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig {
            lr: -1.0,
            ..TrainConfig::classification()
        };
        assert!(bad.validate().is_err());
    }
}
