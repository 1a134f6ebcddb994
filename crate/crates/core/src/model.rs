//! Embedding recommenders and top-K recommendation.

use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use crate::math::dot;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelKind {
    /// Dot-product scores, pairwise BPR objective.
    Bpr,
    /// Dot-product scores, pointwise logistic objective.
    Lmf,
    /// Learned linear head over `p ⊙ q`, pointwise logistic objective.
    Gmf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Bpr, ModelKind::Lmf, ModelKind::Gmf];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bpr => "bpr",
            ModelKind::Lmf => "lmf",
            ModelKind::Gmf => "gmf",
        }
    }
}

impl core::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(ModelKind::Bpr),
            "lmf" => Ok(ModelKind::Lmf),
            "gmf" | "ncf" => Ok(ModelKind::Gmf),
            other => Err(Error::invalid(alloc::format!(
                "unknown model kind `{other}`"
            ))),
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("{rows}x{cols}"),
                found: alloc::format!("{} values", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: alloc::format!("rows of length {cols}"),
                    found: alloc::format!("row of length {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn shape_str(&self) -> alloc::string::String {
        alloc::format!("{}x{}", self.rows, self.cols)
    }
}

/// GMF output layer: `score = weights · (p ⊙ q) + bias`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmfHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Anything that assigns a real-valued score to `(user, item)`.
///
/// `predict` may assume in-range indices; range checks happen at the API
/// boundary (`recommend_top_k`, `EmbeddingModel::score`).
pub trait Recommender {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    fn predict(&self, user: usize, item: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingModel {
    kind: ModelKind,
    users: Matrix,
    items: Matrix,
    head: Option<GmfHead>,
}

impl EmbeddingModel {
    /// Assembles a model from parts, checking shapes, finiteness and that a
    /// head is present exactly for GMF.
    pub fn from_parts(
        kind: ModelKind,
        users: Matrix,
        items: Matrix,
        head: Option<GmfHead>,
    ) -> Result<Self> {
        if users.cols() != items.cols() || users.cols() == 0 {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("matching non-zero dims, users {}", users.shape_str()),
                found: alloc::format!("items {}", items.shape_str()),
            });
        }
        match (&head, kind) {
            (Some(h), ModelKind::Gmf) if h.weights.len() == users.cols() => {}
            (None, ModelKind::Bpr | ModelKind::Lmf) => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: alloc::format!("GMF head of length {} iff kind is gmf", users.cols()),
                    found: alloc::format!(
                        "kind {kind}, head {}",
                        head.as_ref()
                            .map_or("none".to_string(), |h| h.weights.len().to_string())
                    ),
                })
            }
        }
        let model = Self {
            kind,
            users,
            items,
            head,
        };
        if !model.is_finite() {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(model)
    }

    /// Entries i.i.d. uniform in `[-0.5/d, 0.5/d]`; users drawn before items.
    /// A GMF head starts as the all-ones vector with zero bias, so an
    /// untrained GMF scores exactly like a dot-product model.
    pub fn init_random(
        kind: ModelKind,
        num_users: usize,
        num_items: usize,
        dim: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        if num_users == 0 || num_items == 0 || dim == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        let mut rng = rng_from_seed(derive_seed(rng_seed, stream::INIT));
        let bound = 0.5 / dim as f64;
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..=bound)).collect() };
        let users = Matrix::from_vec(num_users, dim, draw(num_users * dim))?;
        let items = Matrix::from_vec(num_items, dim, draw(num_items * dim))?;
        let head = (kind == ModelKind::Gmf).then(|| GmfHead {
            weights: alloc::vec![1.0; dim],
            bias: 0.0,
        });
        Ok(Self {
            kind,
            users,
            items,
            head,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn user_embeddings(&self) -> &Matrix {
        &self.users
    }

    pub fn item_embeddings(&self) -> &Matrix {
        &self.items
    }

    pub fn head(&self) -> Option<&GmfHead> {
        self.head.as_ref()
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix, Option<&mut GmfHead>) {
        (&mut self.users, &mut self.items, self.head.as_mut())
    }

    /// Replaces the item matrix (used to seed a clone with auxiliary items).
    pub fn set_item_embeddings(&mut self, items: Matrix) -> Result<()> {
        if items.rows() != self.items.rows() || items.cols() != self.items.cols() {
            return Err(Error::ShapeMismatch {
                expected: self.items.shape_str(),
                found: items.shape_str(),
            });
        }
        self.items = items;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.users.is_finite()
            && self.items.is_finite()
            && self
                .head
                .as_ref()
                .is_none_or(|h| h.bias.is_finite() && h.weights.iter().all(|w| w.is_finite()))
    }

    /// Score of a user embedding against an arbitrary item vector under this
    /// model's scoring function.
    #[inline]
    pub fn score_vectors(&self, p: &[f64], q: &[f64]) -> f64 {
        match &self.head {
            None => dot(p, q),
            Some(h) => {
                let mut acc = 0.0;
                for k in 0..p.len() {
                    acc += h.weights[k] * (p[k] * q[k]);
                }
                acc + h.bias
            }
        }
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        check_index("user", user, self.users.rows())?;
        check_index("item", item, self.items.rows())?;
        Ok(self.predict(user, item))
    }
}

impl Recommender for EmbeddingModel {
    fn num_users(&self) -> usize {
        self.users.rows()
    }

    fn num_items(&self) -> usize {
        self.items.rows()
    }

    #[inline]
    fn predict(&self, user: usize, item: usize) -> f64 {
        self.score_vectors(self.users.row(user), self.items.row(item))
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        Err(Error::IndexOutOfRange { what, index, len })
    } else {
        Ok(())
    }
}

/// Ordered top-K list for one user.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecommendationList {
    pub user: usize,
    pub items: Vec<usize>,
}

impl RecommendationList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_set(&self) -> BTreeSet<usize> {
        self.items.iter().copied().collect()
    }
}

/// Descending score, ascending index on ties.
#[inline]
pub fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// The `k` highest-scoring items outside `exclude`, best first.
pub fn recommend_top_k<R: Recommender + ?Sized>(
    model: &R,
    user: usize,
    k: usize,
    exclude: &BTreeSet<usize>,
) -> Result<RecommendationList> {
    let n = model.num_items();
    check_index("user", user, model.num_users())?;
    let excluded = exclude.iter().filter(|&&i| i < n).count();
    if k > n - excluded {
        return Err(Error::InsufficientCandidates {
            needed: k,
            available: n - excluded,
        });
    }
    let mut scored: Vec<(usize, f64)> = (0..n)
        .filter(|i| !exclude.contains(i))
        .map(|i| (i, model.predict(user, i)))
        .collect();
    if k == 0 {
        return Ok(RecommendationList {
            user,
            items: Vec::new(),
        });
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        scored.truncate(k);
    }
    scored.sort_unstable_by(|a, b| rank_order(*a, *b));
    Ok(RecommendationList {
        user,
        items: scored.into_iter().map(|(i, _)| i).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Fixed(Vec<f64>);

    impl Recommender for Fixed {
        fn num_users(&self) -> usize {
            1
        }
        fn num_items(&self) -> usize {
            self.0.len()
        }
        fn predict(&self, _: usize, item: usize) -> f64 {
            self.0[item]
        }
    }

    fn two_dim(kind: ModelKind, p: [f64; 2], q: [f64; 2], head: Option<GmfHead>) -> EmbeddingModel {
        EmbeddingModel::from_parts(
            kind,
            Matrix::from_rows(&[&p]).unwrap(),
            Matrix::from_rows(&[&q]).unwrap(),
            head,
        )
        .unwrap()
    }

    #[test]
    fn dot_and_gmf_scores() {
        assert_eq!(
            two_dim(ModelKind::Bpr, [1.0, 2.0], [3.0, 4.0], None)
                .score(0, 0)
                .unwrap(),
            11.0
        );
        assert_eq!(
            two_dim(ModelKind::Lmf, [1.0, 2.0], [0.0, 0.0], None)
                .score(0, 0)
                .unwrap(),
            0.0
        );
        let head = GmfHead {
            weights: vec![1.0, 1.0],
            bias: 0.0,
        };
        let gmf = two_dim(ModelKind::Gmf, [1.0, 2.0], [3.0, 4.0], Some(head));
        assert_eq!(gmf.score(0, 0).unwrap(), 11.0);
        assert!(matches!(
            gmf.score(1, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            gmf.score(0, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn head_must_match_kind() {
        let m = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        assert!(EmbeddingModel::from_parts(ModelKind::Gmf, m.clone(), m.clone(), None).is_err());
        let head = GmfHead {
            weights: vec![1.0, 1.0],
            bias: 0.0,
        };
        assert!(EmbeddingModel::from_parts(ModelKind::Bpr, m.clone(), m, Some(head)).is_err());
    }

    #[test]
    fn hand_sorted_top_k() {
        let m = Fixed(vec![0.9, 0.1, 0.5, 0.7]);
        let ex: BTreeSet<usize> = [0].into_iter().collect();
        assert_eq!(recommend_top_k(&m, 0, 2, &ex).unwrap().items, vec![3, 2]);
        let mut all = recommend_top_k(&m, 0, 3, &ex).unwrap().items;
        all.sort_unstable();
        assert_eq!(all, vec![1, 2, 3]);
        assert!(recommend_top_k(&m, 0, 4, &ex).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let m = Fixed(vec![0.5, 1.0, 0.5, 1.0, 0.5]);
        assert_eq!(
            recommend_top_k(&m, 0, 4, &BTreeSet::new()).unwrap().items,
            vec![1, 3, 0, 2]
        );
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = EmbeddingModel::init_random(ModelKind::Gmf, 7, 9, 8, 42).unwrap();
        let b = EmbeddingModel::init_random(ModelKind::Gmf, 7, 9, 8, 42).unwrap();
        assert_eq!(a, b);
        let c = EmbeddingModel::init_random(ModelKind::Gmf, 7, 9, 8, 43).unwrap();
        assert_ne!(a, c);
        let bound = 0.5 / 8.0;
        assert!(a
            .user_embeddings()
            .as_slice()
            .iter()
            .chain(a.item_embeddings().as_slice())
            .all(|x| x.abs() <= bound));
        assert!(EmbeddingModel::init_random(ModelKind::Bpr, 0, 9, 8, 1).is_err());
    }

    #[test]
    fn init_mean_near_zero() {
        // Uniform(-b, b) has variance b^2/3; 3 sigma of the mean of n draws.
        let d = 64;
        let m = EmbeddingModel::init_random(ModelKind::Bpr, 1000, 600, d, 9).unwrap();
        let xs: Vec<f64> = m
            .user_embeddings()
            .as_slice()
            .iter()
            .chain(m.item_embeddings().as_slice())
            .copied()
            .take(100_000)
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let b = 0.5 / d as f64;
        let sigma = libm::sqrt(b * b / 3.0 / n);
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} sigma {sigma}");
    }
}
