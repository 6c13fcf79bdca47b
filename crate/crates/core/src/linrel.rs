//! Linear relations between finite-dimensional real vector spaces.
//!
//! A relation from `V` to `W` is a subspace of `W × V`, stored as an
//! orthonormal basis whose columns stack a `W` block over a `V` block.

use nalgebra::DMatrix;
use thiserror::Error;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Residual allowed when testing membership of a vector in a subspace.
pub const CONTAINS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinRelError {
    #[error("{context}: expected dimension {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("index map sends {index} to {image}, but only {count} source blocks exist")]
    IndexOutOfRange { index: usize, image: usize, count: usize },
}

fn dim_check(context: &str, expected: usize, found: usize) -> Result<(), LinRelError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinRelError::Dimension {
            context: context.to_string(),
            expected,
            found,
        })
    }
}

/// Singular values and left singular vectors of `m`, largest first.
///
/// Computed from the symmetric eigenproblem of `[[0, M], [Mᵀ, 0]]`, whose
/// positive eigenvalues are the singular values with eigenvectors
/// `(u; v)/√2`. nalgebra's bidiagonal SVD can return inaccurate factors for
/// matrices with exactly dependent columns, which linear relations produce
/// routinely; the symmetric eigensolver does not.
pub fn left_singular(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, k) = m.shape();
    if n == 0 || k == 0 {
        return (Vec::new(), DMatrix::zeros(n, 0));
    }
    let mut aug = DMatrix::zeros(n + k, n + k);
    aug.view_mut((0, n), (n, k)).copy_from(m);
    aug.view_mut((n, 0), (k, n)).copy_from(&m.transpose());
    let eig = aug.symmetric_eigen();
    let mut order: Vec<usize> = (0..n + k).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.truncate(n.min(k));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let u = DMatrix::from_fn(n, order.len(), |r, c| eig.eigenvectors[(r, order[c])] * std::f64::consts::SQRT_2);
    (values, u)
}

/// Orthonormal basis of the column span of `m`.
pub fn orthonormal_span(m: &DMatrix<f64>) -> DMatrix<f64> {
    span_above(m, 0.0)
}

/// Like [`orthonormal_span`], but singular values are cut relative to
/// `max(σ_max, scale)`, so a matrix that is pure rounding noise at `scale`
/// spans nothing.
fn span_above(m: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let (values, u) = left_singular(m);
    let Some(&smax) = values.first() else {
        return DMatrix::zeros(m.nrows(), 0);
    };
    let cut = RANK_CUTOFF * smax.max(scale);
    let rank = values.iter().take_while(|&&s| s > cut).count();
    u.columns(0, rank).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the span of an
/// orthonormal `q`.
fn complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    if q.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let proj = DMatrix::identity(n, n) - q * q.transpose();
    // the projector has eigenvalues 0 and 1 only
    let eig = proj.symmetric_eigen();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

/// Orthonormal basis of `{x : C x = 0}` for a constraint matrix `C` with
/// `n` columns.
pub fn kernel(c: &DMatrix<f64>) -> DMatrix<f64> {
    complement(&orthonormal_span(&c.transpose()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRelation {
    dim_w: usize,
    dim_v: usize,
    basis: DMatrix<f64>,
}

impl LinRelation {
    /// The subspace spanned by the columns of `span` (rows: `W` then `V`).
    pub fn from_span(dim_w: usize, dim_v: usize, span: &DMatrix<f64>) -> Result<Self, LinRelError> {
        dim_check("spanning set rows", dim_w + dim_v, span.nrows())?;
        Ok(LinRelation {
            dim_w,
            dim_v,
            basis: orthonormal_span(span),
        })
    }

    /// Builds a relation from a list of `(w, v)` vectors.
    pub fn from_pairs(dim_w: usize, dim_v: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self, LinRelError> {
        let mut span = DMatrix::zeros(dim_w + dim_v, pairs.len());
        for (k, (w, v)) in pairs.iter().enumerate() {
            dim_check("w component", dim_w, w.len())?;
            dim_check("v component", dim_v, v.len())?;
            for (i, x) in w.iter().chain(v).enumerate() {
                span[(i, k)] = *x;
            }
        }
        Self::from_span(dim_w, dim_v, &span)
    }

    /// `{(w, v) : C (w; v) = 0}`.
    pub fn from_constraints(dim_w: usize, dim_v: usize, c: &DMatrix<f64>) -> Result<Self, LinRelError> {
        dim_check("constraint columns", dim_w + dim_v, c.ncols())?;
        Ok(LinRelation {
            dim_w,
            dim_v,
            basis: kernel(c),
        })
    }

    pub fn full(dim_w: usize, dim_v: usize) -> Self {
        let n = dim_w + dim_v;
        LinRelation {
            dim_w,
            dim_v,
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn zero(dim_w: usize, dim_v: usize) -> Self {
        LinRelation {
            dim_w,
            dim_v,
            basis: DMatrix::zeros(dim_w + dim_v, 0),
        }
    }

    pub fn identity(n: usize) -> Self {
        graph_of(&DMatrix::identity(n, n))
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn dim_v(&self) -> usize {
        self.dim_v
    }

    /// Dimension of the subspace.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Rows of a matrix whose kernel is this subspace.
    pub fn constraints(&self) -> DMatrix<f64> {
        complement(&self.basis).transpose()
    }

    /// Distance from `(w, v)` to the subspace.
    pub fn residual(&self, w: &[f64], v: &[f64]) -> f64 {
        let x = DMatrix::from_iterator(self.dim_w + self.dim_v, 1, w.iter().chain(v).copied());
        let proj = &self.basis * (self.basis.transpose() * &x);
        (x - proj).norm()
    }

    /// The same subspace read as a relation from `W` to `V`.
    pub fn transpose(&self) -> LinRelation {
        let (w, v) = (self.dim_w, self.dim_v);
        let basis = DMatrix::from_fn(w + v, self.dim(), |r, c| {
            if r < v {
                self.basis[(w + r, c)]
            } else {
                self.basis[(r - v, c)]
            }
        });
        LinRelation {
            dim_w: v,
            dim_v: w,
            basis,
        }
    }
}

fn same_ambient(a: &LinRelation, b: &LinRelation) -> Result<(), LinRelError> {
    dim_check("W dimension", a.dim_w, b.dim_w)?;
    dim_check("V dimension", a.dim_v, b.dim_v)
}

/// Whether every basis vector of `b` lies in `a`, within [`CONTAINS_TOL`].
pub fn contains(a: &LinRelation, b: &LinRelation) -> Result<bool, LinRelError> {
    same_ambient(a, b)?;
    if b.dim() == 0 {
        return Ok(true);
    }
    let proj = &a.basis * (a.basis.transpose() * &b.basis);
    let gap = (&b.basis - proj).abs().max();
    Ok(gap <= CONTAINS_TOL)
}

pub fn equals(a: &LinRelation, b: &LinRelation) -> Result<bool, LinRelError> {
    Ok(a.dim() == b.dim() && contains(a, b)? && contains(b, a)?)
}

/// Intersection of subspaces given by orthonormal bases in the same ambient
/// space.
fn intersect(bases: &[&DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let rows: Vec<DMatrix<f64>> = bases.iter().map(|b| complement(b).transpose()).collect();
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut c = DMatrix::zeros(total, n);
    let mut at = 0;
    for r in rows {
        c.view_mut((at, 0), (r.nrows(), n)).copy_from(&r);
        at += r.nrows();
    }
    kernel(&c)
}

/// `S ∘ R` for `R ⊆ Y × X` and `S ⊆ Z × Y`.
pub fn compose_rel(s: &LinRelation, r: &LinRelation) -> Result<LinRelation, LinRelError> {
    dim_check("composition middle space", s.dim_v, r.dim_w)?;
    let (z, y, x) = (s.dim_w, s.dim_v, r.dim_v);
    let n = z + y + x;
    // S × X inside Z × Y × X
    let mut a = DMatrix::zeros(n, s.dim() + x);
    a.view_mut((0, 0), (z + y, s.dim())).copy_from(&s.basis);
    a.view_mut((z + y, s.dim()), (x, x)).fill_with_identity();
    // Z × R inside Z × Y × X
    let mut b = DMatrix::zeros(n, z + r.dim());
    b.view_mut((0, 0), (z, z)).fill_with_identity();
    b.view_mut((z, z), (y + x, r.dim())).copy_from(&r.basis);
    let both = intersect(&[&orthonormal_span(&a), &orthonormal_span(&b)], n);
    let k = both.ncols();
    let projected = DMatrix::from_fn(z + x, k, |row, c| {
        if row < z {
            both[(row, c)]
        } else {
            both[(row + y, c)]
        }
    });
    // columns of `both` are unit vectors, so measure the projection at scale 1
    Ok(LinRelation {
        dim_w: z,
        dim_v: x,
        basis: span_above(&projected, 1.0),
    })
}

/// `graph(T) = {(T v, v)}` for a `W × V` matrix `T`.
pub fn graph_of(t: &DMatrix<f64>) -> LinRelation {
    let (w, v) = t.shape();
    let mut span = DMatrix::zeros(w + v, v);
    span.view_mut((0, 0), (w, v)).copy_from(t);
    span.view_mut((w, 0), (v, v)).fill_with_identity();
    LinRelation {
        dim_w: w,
        dim_v: v,
        basis: orthonormal_span(&span),
    }
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut at = 0;
    dims.iter()
        .map(|d| {
            let o = at;
            at += d;
            o
        })
        .collect()
}

/// `⊙(φ, Φ)`: the pairs `(w, v) ∈ ⊕τ(x) × ⊕μ(y)` with
/// `(w_a, v_{φ(a)}) ∈ Φ(a)` for every `a`.
///
/// `components[a]` relates `μ(φ(a))` to `τ(a)`; `mu_dims` lists every
/// `μ(y)`, including those outside the image of `φ`.
pub fn odot(phi: &[usize], components: &[LinRelation], mu_dims: &[usize]) -> Result<LinRelation, LinRelError> {
    dim_check("components per index", phi.len(), components.len())?;
    let tau_dims: Vec<usize> = components.iter().map(|c| c.dim_w).collect();
    for (a, &y) in phi.iter().enumerate() {
        let d = *mu_dims.get(y).ok_or(LinRelError::IndexOutOfRange {
            index: a,
            image: y,
            count: mu_dims.len(),
        })?;
        dim_check(&format!("component {a} source dimension"), d, components[a].dim_v)?;
    }
    let (tw, tv) = (offsets(&tau_dims), offsets(mu_dims));
    let dim_w: usize = tau_dims.iter().sum();
    let dim_v: usize = mu_dims.iter().sum();
    let blocks: Vec<DMatrix<f64>> = components.iter().map(LinRelation::constraints).collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut c = DMatrix::zeros(rows, dim_w + dim_v);
    let mut at = 0;
    for (a, block) in blocks.iter().enumerate() {
        let (w, k) = (tau_dims[a], block.nrows());
        let v = mu_dims[phi[a]];
        c.view_mut((at, tw[a]), (k, w)).copy_from(&block.columns(0, w));
        c.view_mut((at, dim_w + tv[phi[a]]), (k, v)).copy_from(&block.columns(w, v));
        at += k;
    }
    LinRelation::from_constraints(dim_w, dim_v, &c)
}

/// The block map `⊕(φ, T): ⊕μ(y) → ⊕τ(x)` whose block row `a` applies
/// `maps[a]` to block `φ(a)`.
pub fn direct_sum_map(phi: &[usize], maps: &[DMatrix<f64>], mu_dims: &[usize]) -> Result<DMatrix<f64>, LinRelError> {
    dim_check("maps per index", phi.len(), maps.len())?;
    let tau_dims: Vec<usize> = maps.iter().map(|m| m.nrows()).collect();
    let (tw, tv) = (offsets(&tau_dims), offsets(mu_dims));
    let mut out = DMatrix::zeros(tau_dims.iter().sum(), mu_dims.iter().sum());
    for (a, (&y, m)) in phi.iter().zip(maps).enumerate() {
        let d = *mu_dims.get(y).ok_or(LinRelError::IndexOutOfRange {
            index: a,
            image: y,
            count: mu_dims.len(),
        })?;
        dim_check(&format!("map {a} columns"), d, m.ncols())?;
        out.view_mut((tw[a], tv[y]), m.shape()).copy_from(m);
    }
    Ok(out)
}

/// Linear vector fields `A` on `V` and `B` on `W` are related by `f: V → W`
/// when `f A = B f`. Returns that relation as a subspace of
/// `gl(W) × gl(V)`, with matrices flattened column-major.
pub fn linear_field_relation(f: &DMatrix<f64>) -> LinRelation {
    let (m, n) = f.shape();
    // vec(f A) = (I_n ⊗ f) vec(A), vec(B f) = (fᵀ ⊗ I_m) vec(B)
    let on_a = DMatrix::<f64>::identity(n, n).kronecker(f);
    let on_b = f.transpose().kronecker(&DMatrix::<f64>::identity(m, m));
    let mut c = DMatrix::zeros(m * n, m * m + n * n);
    c.view_mut((0, 0), (m * n, m * m)).copy_from(&(-on_b));
    c.view_mut((0, m * m), (m * n, n * n)).copy_from(&on_a);
    LinRelation::from_constraints(m * m, n * n, &c).expect("constraint width matches")
}
