//! Central-difference checks of hand-written gradients.

use alloc::vec::Vec;

use rand::Rng;

use crate::attack::{stealing_loss_backprop, FusedCloneModel, PairLoss, StealingLossSpec};
use crate::data::{ItemMask, NegativeSample};
use crate::model::{EmbeddingModel, Matrix, ModelKind, RecommendationList, Recommender};
use crate::train::{Gradients, Trainable};
use crate::{Error, Result};

/// A scalar function of a flat parameter vector.
pub trait Differentiable {
    fn dim(&self) -> usize;
    fn loss(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// True when `x` lies within `tol` of a non-differentiable point.
    fn near_kink(&self, _x: &[f64], _tol: f64) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|g_a - g_fd| / max(1, |g_a|, |g_fd|)` over coordinates.
    pub max_error: f64,
    pub worst_index: usize,
}

pub const STEP: f64 = 1e-5;

pub fn grad_check<F: Differentiable + ?Sized>(f: &F, x: &[f64]) -> Result<GradCheck> {
    if x.len() != f.dim() {
        return Err(Error::LengthMismatch {
            left: f.dim(),
            right: x.len(),
        });
    }
    let analytic = f.gradient(x);
    let mut probe = x.to_vec();
    let mut out = GradCheck {
        max_error: 0.0,
        worst_index: 0,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let up = f.loss(&probe);
        probe[i] = x[i] - STEP;
        let down = f.loss(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss { probe: i });
        }
        let fd = (up - down) / (2.0 * STEP);
        let ga = analytic[i];
        let err = (ga - fd).abs() / 1f64.max(ga.abs()).max(fd.abs());
        if err > out.max_error {
            out.max_error = err;
            out.worst_index = i;
        }
    }
    Ok(out)
}

/// `count` points with coordinates uniform in `[-scale, scale]`, each
/// resampled while it lies within `1e-3` of a kink.
pub fn random_probes<F: Differentiable + ?Sized, R: Rng + ?Sized>(
    f: &F,
    count: usize,
    scale: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let x: Vec<f64> = (0..f.dim())
                .map(|_| rng.gen_range(-scale..=scale))
                .collect();
            if !f.near_kink(&x, 1e-3) {
                break x;
            }
        })
        .collect()
}

/// Views a scalar objective of a [`Trainable`] model as a function of its
/// flattened parameters. `objective` must add its gradient into the buffer
/// and return the loss; `kink` reports probes near non-smooth points.
pub struct TrainableObjective<M, F, K> {
    model: M,
    objective: F,
    kink: K,
}

impl<M, F, K> TrainableObjective<M, F, K>
where
    M: Trainable + Clone,
    F: Fn(&M, &mut Gradients) -> f64,
    K: Fn(&M, f64) -> bool,
{
    pub fn new(model: M, objective: F, kink: K) -> Self {
        Self {
            model,
            objective,
            kink,
        }
    }

    /// Current parameters, flattened block by block.
    pub fn point(&self) -> Vec<f64> {
        self.model.params().into_iter().flatten().copied().collect()
    }

    fn at(&self, x: &[f64]) -> M {
        let mut m = self.model.clone();
        let mut offset = 0;
        for block in m.params_mut() {
            let n = block.len();
            block.copy_from_slice(&x[offset..offset + n]);
            offset += n;
        }
        m
    }
}

impl<M, F, K> Differentiable for TrainableObjective<M, F, K>
where
    M: Trainable + Clone,
    F: Fn(&M, &mut Gradients) -> f64,
    K: Fn(&M, f64) -> bool,
{
    fn dim(&self) -> usize {
        self.model.param_layout().iter().sum()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let m = self.at(x);
        let mut g = Gradients::zeros(&m.param_layout());
        (self.objective)(&m, &mut g)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.at(x);
        let mut g = Gradients::zeros(&m.param_layout());
        (self.objective)(&m, &mut g);
        g.flatten()
    }

    fn near_kink(&self, x: &[f64], tol: f64) -> bool {
        (self.kink)(&self.at(x), tol)
    }
}

/// Worst relative error of one gradient path over its probes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCheck {
    pub name: &'static str,
    pub probes: usize,
    pub max_error: f64,
}

fn check_path<F: Differentiable + ?Sized>(
    name: &'static str,
    f: &F,
    probes: usize,
    rng: &mut crate::rng::StdRng,
) -> Result<PathCheck> {
    let mut max_error: f64 = 0.0;
    for x in random_probes(f, probes, 1.0, rng) {
        max_error = max_error.max(grad_check(f, &x)?.max_error);
    }
    Ok(PathCheck {
        name,
        probes,
        max_error,
    })
}

fn fused_kink(m: &FusedCloneModel, user: usize, items: &[usize], tol: f64) -> bool {
    let p = m.base().user_embeddings().row(user);
    items.iter().any(|&j| {
        m.mask().is_eligible(j)
            && (0..p.len()).any(|k| {
                (p[k] * m.base().item_embeddings().row(j)[k]).abs() < tol
                    || (p[k] * m.aux_items().row(j)[k]).abs() < tol
            })
    })
}

fn stealing_kink<R: Recommender>(
    m: &R,
    list: &RecommendationList,
    negs: &[NegativeSample],
    spec: &StealingLossSpec,
    tol: f64,
) -> bool {
    let u = list.user;
    let near = |a: f64, b: f64| (spec.margin - (a - b)).abs() < tol;
    let items = &list.items;
    (spec.ranking == PairLoss::Hinge
        && items
            .windows(2)
            .any(|w| near(m.predict(u, w[0]), m.predict(u, w[1]))))
        || (spec.positive == PairLoss::Hinge
            && items.iter().zip(negs).any(|(&j, n)| {
                n.items
                    .iter()
                    .any(|&k| near(m.predict(u, j), m.predict(u, k)))
            }))
}

/// Checks every hand-written gradient path at `probes` random points:
/// BPR, logistic and hinge losses through dot scores, the GMF head, and the
/// stealing loss through the attention-fused score (dot and GMF scorers).
pub fn path_suite(probes: usize, seed: u64) -> Result<Vec<PathCheck>> {
    use crate::loss::*;
    use alloc::vec;

    let mut rng = crate::rng::rng_from_seed(seed);
    let (users, items, d) = (2, 6, 3);
    let dot = EmbeddingModel::init_random(ModelKind::Bpr, users, items, d, seed)?;
    let gmf = EmbeddingModel::init_random(ModelKind::Gmf, users, items, d, seed)?;
    let mut out = Vec::new();

    let bpr = TrainableObjective::new(
        dot.clone(),
        |m: &EmbeddingModel, g: &mut Gradients| {
            let (p, n) = (m.predict(0, 1), m.predict(0, 4));
            let gr = loss_bpr_grad(p, n);
            m.backprop(0, 1, gr, g);
            m.backprop(0, 4, -gr, g);
            loss_bpr(p, n)
        },
        |_: &EmbeddingModel, _| false,
    );
    out.push(check_path("bpr", &bpr, probes, &mut rng)?);

    let logistic = |m: &EmbeddingModel, g: &mut Gradients| {
        let (p, n) = (m.predict(1, 0), m.predict(1, 2));
        m.backprop(1, 0, loss_logistic_grad(p, true), g);
        m.backprop(1, 2, loss_logistic_grad(n, false), g);
        loss_logistic(p, true) + loss_logistic(n, false)
    };
    let lmf = TrainableObjective::new(dot.clone(), logistic, |_: &EmbeddingModel, _| false);
    out.push(check_path("logistic", &lmf, probes, &mut rng)?);

    let margin = 0.5;
    let hinge = TrainableObjective::new(
        dot.clone(),
        move |m: &EmbeddingModel, g: &mut Gradients| {
            let (p, n) = (m.predict(0, 3), m.predict(0, 5));
            let gr = loss_hinge_grad(p, n, margin);
            m.backprop(0, 3, gr, g);
            m.backprop(0, 5, -gr, g);
            loss_hinge(p, n, margin)
        },
        move |m: &EmbeddingModel, tol| (margin - (m.predict(0, 3) - m.predict(0, 5))).abs() < tol,
    );
    out.push(check_path("hinge", &hinge, probes, &mut rng)?);

    let head = TrainableObjective::new(gmf.clone(), logistic, |_: &EmbeddingModel, _| false);
    out.push(check_path("gmf_head", &head, probes, &mut rng)?);

    let list = RecommendationList {
        user: 0,
        items: vec![0, 1, 5],
    };
    let negs = vec![
        NegativeSample {
            user: 0,
            items: vec![2, 3],
        },
        NegativeSample {
            user: 0,
            items: vec![4],
        },
        NegativeSample {
            user: 0,
            items: vec![3],
        },
    ];
    // Item 5 is outside the mask so the bypass path is covered too.
    let mask = ItemMask::from_flags(vec![true, true, true, true, true, false]);
    let mut aux = Matrix::zeros(items, d);
    for x in aux.as_mut_slice() {
        *x = rng.gen_range(-1.0..1.0);
    }
    for (name, base, spec) in [
        ("fused_attention", dot, StealingLossSpec::default()),
        (
            "fused_attention_hinge",
            dot_clone(&gmf, ModelKind::Bpr, seed)?,
            StealingLossSpec::qsd_default(),
        ),
        ("fused_attention_gmf", gmf, StealingLossSpec::default()),
    ] {
        let fused = FusedCloneModel::new(base, aux.clone(), mask.clone())?;
        let (l, n) = (list.clone(), negs.clone());
        let (l2, n2) = (list.clone(), negs.clone());
        let f = TrainableObjective::new(
            fused,
            move |m: &FusedCloneModel, g: &mut Gradients| {
                stealing_loss_backprop(m, 0, &l, &spec, &n, 1.0, g).unwrap_or(f64::NAN)
            },
            move |m: &FusedCloneModel, tol| {
                fused_kink(m, 0, &[0, 1, 2, 3, 4, 5], tol) || stealing_kink(m, &l2, &n2, &spec, tol)
            },
        );
        out.push(check_path(name, &f, probes, &mut rng)?);
    }
    Ok(out)
}

fn dot_clone(like: &EmbeddingModel, kind: ModelKind, seed: u64) -> Result<EmbeddingModel> {
    EmbeddingModel::init_random(
        kind,
        like.num_users(),
        like.num_items(),
        like.dim(),
        seed ^ 1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Cubic;

    impl Differentiable for Cubic {
        fn dim(&self) -> usize {
            2
        }
        fn loss(&self, x: &[f64]) -> f64 {
            x[0] * x[0] * x[0] + 2.0 * x[0] * x[1]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![3.0 * x[0] * x[0] + 2.0 * x[1], 2.0 * x[0]]
        }
    }

    struct Wrong;

    impl Differentiable for Wrong {
        fn dim(&self) -> usize {
            1
        }
        fn loss(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0]]
        }
    }

    #[test]
    fn every_path_passes() {
        for c in path_suite(20, 7).unwrap() {
            assert!(c.max_error < 1e-4, "{}: {}", c.name, c.max_error);
        }
    }

    #[test]
    fn accepts_correct_rejects_wrong() {
        assert!(grad_check(&Cubic, &[0.7, -1.3]).unwrap().max_error < 1e-8);
        assert!(grad_check(&Wrong, &[2.0]).unwrap().max_error > 0.1);
        assert!(grad_check(&Cubic, &[1.0]).is_err());
    }
}
