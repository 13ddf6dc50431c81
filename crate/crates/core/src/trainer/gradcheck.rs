//! Finite-difference gradient checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::losses::{multitask_loss, triplet_scores, LossWeights};
use crate::encoder::{Encoder, EncoderConfig, TokenVocab};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Graph, ParamStore, Var};
use crate::pretrain_data::{generate, PretrainConfig, PretrainSample, Task};
use crate::synthetic::{synthetic_dataset, synthetic_labels};
use crate::tasks::{ranking_loss, HeadConfig, Model, NameVocabulary};
use crate::Exec;

pub const GRAD_EPS: f64 = 1e-5;
pub const MAX_COORDS: usize = 500;
pub const TOLERANCE: f64 = 1e-4;

/// One evaluation of the loss under test.
#[derive(Clone, Debug, Default)]
pub struct LossEval {
    pub loss: f64,
    /// Only required when asked for.
    pub grads: Gradients,
    /// [`Graph::branch_pattern`] of the evaluation, or 0 for smooth losses.
    pub pattern: u64,
}

impl LossEval {
    pub fn from_graph(g: &Graph, root: Var, with_grads: bool) -> Self {
        LossEval {
            loss: g.value(root).item(),
            grads: if with_grads { g.backward(root) } else { Gradients::default() },
            pattern: g.branch_pattern(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub path: String,
    pub coords_checked: usize,
    /// Over coordinates on one differentiable piece whose gradient is
    /// above the finite-difference resolution.
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Over every sampled coordinate, for reference.
    pub max_relative_error_unfiltered: f64,
    /// Coordinates where `x +- eps` changes a ReLU sign or a max argmax.
    pub kinks_skipped: usize,
    /// Coordinates below the resolution, compared by absolute error.
    pub below_resolution: usize,
    pub max_abs_error_below_resolution: f64,
    pub resolution: f64,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE && self.max_abs_error_below_resolution < TOLERANCE * self.resolution
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Smallest gradient a central difference with step `eps` resolves to a
/// relative error of `TOLERANCE`, given rounding in a loss of size `loss`.
pub fn resolution(loss: f64, eps: f64) -> f64 {
    f64::EPSILON * loss.abs().max(1.0) / eps / TOLERANCE
}

/// Compares the analytic gradient of `loss_fn` with central differences on
/// up to `max_coords` coordinates, drawn without replacement from the
/// parameters the loss reads. `loss_fn`'s
/// flag asks for gradients.
pub fn grad_check<F>(path: &str, loss_fn: F, store: &ParamStore, eps: f64, max_coords: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, bool) -> Result<LossEval>,
{
    let base = loss_fn(store, true)?;
    if !base.loss.is_finite() {
        return Err(Error::NonFiniteLoss(base.loss));
    }
    // parameters the loss never reads have an exactly zero gradient
    let coords: Vec<(String, usize)> = store
        .iter()
        .filter(|(name, _)| base.grads.by_name.is_empty() || base.grads.get(name).is_some())
        .flat_map(|(name, p)| (0..p.value.data.len()).map(move |i| (name.clone(), i)))
        .collect();
    let picked: Vec<usize> = if coords.len() <= max_coords {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(&mut ChaCha8Rng::seed_from_u64(seed), coords.len(), max_coords).into_vec();
        v.sort_unstable();
        v
    };
    let res = resolution(base.loss, eps);
    let mut r = GradCheckReport {
        path: path.into(),
        coords_checked: picked.len(),
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        max_relative_error_unfiltered: 0.0,
        kinks_skipped: 0,
        below_resolution: 0,
        max_abs_error_below_resolution: 0.0,
        resolution: res,
        loss: base.loss,
    };
    let mut work = store.clone();
    for &c in &picked {
        let (name, i) = &coords[c];
        let x0 = work.value(name).data[*i];
        work.value_mut(name).data[*i] = x0 + eps;
        let plus = loss_fn(&work, false)?;
        work.value_mut(name).data[*i] = x0 - eps;
        let minus = loss_fn(&work, false)?;
        work.value_mut(name).data[*i] = x0;
        for l in [plus.loss, minus.loss] {
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss(l));
            }
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * eps);
        let analytic = base.grads.get(name).map_or(0.0, |g| g.data[*i]);
        let e = relative_error(analytic, numeric);
        r.max_relative_error_unfiltered = r.max_relative_error_unfiltered.max(e);
        if plus.pattern != base.pattern || minus.pattern != base.pattern {
            r.kinks_skipped += 1;
        } else if analytic.abs().max(numeric.abs()) < res {
            r.below_resolution += 1;
            r.max_abs_error_below_resolution = r.max_abs_error_below_resolution.max((analytic - numeric).abs());
        } else if e >= r.max_relative_error {
            r.max_relative_error = e;
            r.worst_param = format!("{name}[{i}]");
            r.worst_analytic = analytic;
            r.worst_numeric = numeric;
        }
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossPath {
    Infill,
    Cdi,
    Dui,
    NameLoss,
    Ranking,
    RankingLiteral,
    Joint,
}

impl LossPath {
    pub const ALL: [LossPath; 7] =
        [LossPath::Infill, LossPath::Cdi, LossPath::Dui, LossPath::NameLoss, LossPath::Ranking, LossPath::RankingLiteral, LossPath::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            LossPath::Infill => "infill",
            LossPath::Cdi => "cdi",
            LossPath::Dui => "dui",
            LossPath::NameLoss => "name",
            LossPath::Ranking => "ranking",
            LossPath::RankingLiteral => "ranking-literal",
            LossPath::Joint => "joint",
        }
    }
}

impl std::str::FromStr for LossPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossPath::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss path `{s}`")))
    }
}

/// Gradient check of one loss path on a freshly initialized toy model.
pub fn toy_grad_check(path: LossPath, seed: u64) -> Result<GradCheckReport> {
    let data = synthetic_dataset(4, 3, seed);
    let labels = synthetic_labels(4, 3, seed);
    let names = NameVocabulary::build(data.iter().zip(&labels).map(|(r, l)| (r.id.as_str(), l.as_slice())));
    let mut cfg = EncoderConfig::toy();
    cfg.dropout = 0.0;
    let encoder = Encoder::new(cfg, TokenVocab::build(&data, 1))?;
    let model = Model::new(encoder, HeadConfig::toy(), names)?;
    let store = model.init_params(seed);
    let (x, y, z) = (&data[0], &data[1], &data[3]);
    let gold = model.names.encode(&labels[0]);
    let check = |f: &dyn Fn(&ParamStore, bool) -> Result<LossEval>| grad_check(path.as_str(), f, &store, GRAD_EPS, MAX_COORDS, seed);

    match path {
        LossPath::Infill | LossPath::Cdi | LossPath::Dui => {
            let task = match path {
                LossPath::Infill => Task::Infill,
                LossPath::Cdi => Task::Cdi,
                _ => Task::Dui,
            };
            let samples = generate(&data[..3], task, &PretrainConfig::default(), seed, Exec::Serial)?;
            let s: PretrainSample = samples
                .iter()
                .find(|s| matches!(s, PretrainSample::Pair(p) if p.label) || task == Task::Infill)
                .or(samples.first())
                .cloned()
                .ok_or_else(|| Error::Empty(format!("no {} samples", task.as_str())))?;
            check(&|st, wg| {
                let mut g = Graph::new(st);
                let l = model.encoder.sample_loss(&mut g, &s)?;
                Ok(LossEval::from_graph(&g, l, wg))
            })
        }
        LossPath::NameLoss => check(&|st, wg| {
            let mut g = Graph::new(st);
            let e = model.encoder.encode(&mut g, x)?.emb;
            let l = model.heads.name_loss(&mut g, e, &gold)?;
            Ok(LossEval::from_graph(&g, l, wg))
        }),
        LossPath::Ranking | LossPath::RankingLiteral => {
            let literal = path == LossPath::RankingLiteral;
            // order the pair and pick the margin so the hinge is active
            let mut g = Graph::new(&store);
            let ex = model.encoder.encode(&mut g, x)?.emb;
            let (fp, fn_) = triplet_scores(&model, &mut g, ex, y, z)?;
            let gap = g.value(fp).item() - g.value(fn_).item();
            let (y, z, gap) = if literal && gap < 0.0 { (z, y, -gap) } else { (y, z, gap) };
            let margin = if literal { gap / 2.0 } else { (gap + 0.5).max(0.1) };
            check(&|st, wg| {
                let mut g = Graph::new(st);
                let ex = model.encoder.encode(&mut g, x)?.emb;
                let (fp, fn_) = triplet_scores(&model, &mut g, ex, y, z)?;
                let l = ranking_loss(&mut g, fp, fn_, margin, literal);
                Ok(LossEval::from_graph(&g, l, wg))
            })
        }
        LossPath::Joint => {
            let w = LossWeights { lambda1: 1.0, lambda2: 0.7, margin: 2.5, literal: false };
            check(&|st, wg| {
                let mut g = Graph::new(st);
                let (l, _) = multitask_loss(&model, &mut g, x, &gold, Some((y, z)), &w)?;
                Ok(LossEval::from_graph(&g, l, wg))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mat;

    fn quadratic(st: &ParamStore, _: bool) -> Result<LossEval> {
        let x = st.value("x").item();
        let mut grads = Gradients::default();
        grads.add("x", &Mat::scalar(2.0 * x));
        Ok(LossEval { loss: x * x, grads, pattern: 0 })
    }

    #[test]
    fn quadratic_is_exact() {
        let mut s = ParamStore::new(0);
        s.insert("x", Mat::scalar(3.0));
        let r = grad_check("q", quadratic, &s, GRAD_EPS, MAX_COORDS, 0).unwrap();
        assert!(r.max_relative_error < 1e-9, "{r:?}");
        assert_eq!(r.kinks_skipped + r.below_resolution, 0);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let mut s = ParamStore::new(0);
        s.insert("x", Mat::scalar(3.0));
        let bad = |st: &ParamStore, wg| {
            let mut e = quadratic(st, wg)?;
            e.grads.scale(1.1);
            Ok(e)
        };
        assert!(grad_check("q", bad, &s, GRAD_EPS, MAX_COORDS, 0).unwrap().max_relative_error > 1e-2);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut s = ParamStore::new(0);
        s.insert("x", Mat::scalar(3.0));
        let nan = |_: &ParamStore, _| Ok(LossEval { loss: f64::NAN, ..Default::default() });
        assert!(matches!(grad_check("q", nan, &s, GRAD_EPS, MAX_COORDS, 0), Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn kink_straddling_coordinates_are_skipped() {
        let mut s = ParamStore::new(0);
        s.insert("x", Mat::scalar(2e-6));
        let relu = |st: &ParamStore, wg| {
            let mut g = Graph::new(st);
            let x = g.param("x");
            let y = g.relu(x);
            Ok(LossEval::from_graph(&g, y, wg))
        };
        let r = grad_check("relu", relu, &s, GRAD_EPS, MAX_COORDS, 0).unwrap();
        assert_eq!(r.kinks_skipped, 1);
        assert!(r.max_relative_error_unfiltered > 0.1);
    }

    #[test]
    fn toy_paths_pass() {
        for p in LossPath::ALL {
            let r = toy_grad_check(p, 1).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!(r.coords_checked > 0);
        }
    }
}
