//! Coordinate representations of points, vectors, covectors and bivectors on
//! `ℝ^{2r} × ℝ^{2k}`. All objects use the block order `(y, x, p, q)`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fast (`r`) and slow (`k`) degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub r: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(r: usize, k: usize) -> Result<Self> {
        if r == 0 || k == 0 {
            return Err(Error::InvalidSystem(format!(
                "need r ≥ 1 and k ≥ 1, got r = {r}, k = {k}"
            )));
        }
        Ok(Self { r, k })
    }

    /// Total phase-space dimension `2r + 2k`.
    pub fn len(&self) -> usize {
        2 * (self.r + self.k)
    }

    pub fn y(&self) -> Range<usize> {
        0..self.r
    }

    pub fn x(&self) -> Range<usize> {
        self.r..2 * self.r
    }

    pub fn p(&self) -> Range<usize> {
        2 * self.r..2 * self.r + self.k
    }

    pub fn q(&self) -> Range<usize> {
        2 * self.r + self.k..self.len()
    }

    /// The `(y, x)` block.
    pub fn fast(&self) -> Range<usize> {
        0..2 * self.r
    }

    /// The `(p, q)` block.
    pub fn slow(&self) -> Range<usize> {
        2 * self.r..self.len()
    }

    pub fn y_index(&self, i: usize) -> usize {
        i
    }

    pub fn x_index(&self, i: usize) -> usize {
        self.r + i
    }

    pub fn p_index(&self, i: usize) -> usize {
        2 * self.r + i
    }

    pub fn q_index(&self, i: usize) -> usize {
        2 * self.r + self.k + i
    }

    pub(crate) fn check(&self, len: usize) -> Result<()> {
        if len == self.len() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.len(),
                got: len,
            })
        }
    }
}

macro_rules! block_vector {
    ($(#[$meta:meta])* $name:ident, $y:ident, $x:ident, $p:ident, $q:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            dims: Dims,
            comps: DVector<f64>,
        }

        impl $name {
            pub fn from_vector(dims: Dims, comps: DVector<f64>) -> Result<Self> {
                dims.check(comps.len())?;
                Ok(Self { dims, comps })
            }

            pub fn from_slice(dims: Dims, comps: &[f64]) -> Result<Self> {
                Self::from_vector(dims, DVector::from_column_slice(comps))
            }

            pub fn zeros(dims: Dims) -> Self {
                Self { dims, comps: DVector::zeros(dims.len()) }
            }

            /// Unit vector along coordinate `index` of the flat layout.
            pub fn basis(dims: Dims, index: usize) -> Self {
                let mut comps = DVector::zeros(dims.len());
                comps[index] = 1.0;
                Self { dims, comps }
            }

            pub fn dims(&self) -> Dims {
                self.dims
            }

            pub fn as_vector(&self) -> &DVector<f64> {
                &self.comps
            }

            pub fn into_vector(self) -> DVector<f64> {
                self.comps
            }

            pub fn as_slice(&self) -> &[f64] {
                self.comps.as_slice()
            }

            pub fn $y(&self) -> &[f64] {
                &self.comps.as_slice()[self.dims.y()]
            }

            pub fn $x(&self) -> &[f64] {
                &self.comps.as_slice()[self.dims.x()]
            }

            pub fn $p(&self) -> &[f64] {
                &self.comps.as_slice()[self.dims.p()]
            }

            pub fn $q(&self) -> &[f64] {
                &self.comps.as_slice()[self.dims.q()]
            }

            pub fn fast(&self) -> &[f64] {
                &self.comps.as_slice()[self.dims.fast()]
            }

            pub fn slow(&self) -> &[f64] {
                &self.comps.as_slice()[self.dims.slow()]
            }

            pub fn norm(&self) -> f64 {
                self.comps.norm()
            }

            pub fn is_finite(&self) -> bool {
                self.comps.iter().all(|c| c.is_finite())
            }

            pub fn scaled(&self, factor: f64) -> Self {
                Self { dims: self.dims, comps: &self.comps * factor }
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, index: usize) -> &f64 {
                &self.comps[index]
            }
        }
    };
}

block_vector!(
    /// A point `(y, x, p, q)` of phase space.
    PhasePoint, y, x, p, q
);

block_vector!(
    /// Components `(dy, dx, dp, dq)` of a tangent vector.
    TangentVector, dy, dx, dp, dq
);

block_vector!(
    /// Components `(cy, cx, cp, cq)` of a 1-form at a point.
    Covector, cy, cx, cp, cq
);

impl PhasePoint {
    pub fn new(y: &[f64], x: &[f64], p: &[f64], q: &[f64]) -> Result<Self> {
        if y.len() != x.len() || p.len() != q.len() {
            return Err(Error::Dimension {
                expected: y.len() + p.len(),
                got: x.len() + q.len(),
            });
        }
        let dims = Dims::new(y.len(), p.len())?;
        let comps = DVector::from_iterator(
            dims.len(),
            y.iter().chain(x).chain(p).chain(q).copied(),
        );
        Ok(Self { dims, comps })
    }

    /// The point displaced by `step · v`.
    pub fn offset(&self, v: &DVector<f64>, step: f64) -> Self {
        Self {
            dims: self.dims,
            comps: &self.comps + v * step,
        }
    }

    /// The point with coordinate `index` shifted by `delta`.
    pub fn shifted(&self, index: usize, delta: f64) -> Self {
        let mut comps = self.comps.clone();
        comps[index] += delta;
        Self {
            dims: self.dims,
            comps,
        }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (&self.comps - &other.comps).norm()
    }
}

impl TangentVector {
    pub fn dot(&self, covector: &Covector) -> f64 {
        self.comps.dot(&covector.comps)
    }
}

impl std::ops::Add for &TangentVector {
    type Output = TangentVector;
    fn add(self, rhs: &TangentVector) -> TangentVector {
        TangentVector {
            dims: self.dims,
            comps: &self.comps + &rhs.comps,
        }
    }
}

impl std::ops::Sub for &TangentVector {
    type Output = TangentVector;
    fn sub(self, rhs: &TangentVector) -> TangentVector {
        TangentVector {
            dims: self.dims,
            comps: &self.comps - &rhs.comps,
        }
    }
}

/// An antisymmetric contravariant 2-tensor in the `(y, x, p, q)` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Bivector {
    dims: Dims,
    matrix: DMatrix<f64>,
}

impl Bivector {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            matrix: DMatrix::zeros(dims.len(), dims.len()),
        }
    }

    /// `a ∧ b` with components `aⁱbʲ − aʲbⁱ`.
    pub fn wedge(a: &TangentVector, b: &TangentVector) -> Self {
        let outer = a.as_vector() * b.as_vector().transpose();
        Self {
            dims: a.dims(),
            matrix: &outer - outer.transpose(),
        }
    }

    /// The canonical slow tensor `Σᵢ ∂/∂pⁱ ∧ ∂/∂qⁱ`.
    pub fn slow_canonical(dims: Dims) -> Self {
        let mut out = Self::zeros(dims);
        for i in 0..dims.k {
            out += Self::wedge(
                &TangentVector::basis(dims, dims.p_index(i)),
                &TangentVector::basis(dims, dims.q_index(i)),
            );
        }
        out
    }

    /// The canonical fast tensor `Σᵢ ∂/∂yⁱ ∧ ∂/∂xⁱ`.
    pub fn fast_canonical(dims: Dims) -> Self {
        let mut out = Self::zeros(dims);
        for i in 0..dims.r {
            out += Self::wedge(
                &TangentVector::basis(dims, dims.y_index(i)),
                &TangentVector::basis(dims, dims.x_index(i)),
            );
        }
        out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Interior product `i_α Π`, the vector `Π(α, ·)`.
    pub fn contract(&self, alpha: &Covector) -> TangentVector {
        let comps = self.matrix.tr_mul(alpha.as_vector());
        TangentVector {
            dims: self.dims,
            comps,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dims: self.dims,
            matrix: &self.matrix * factor,
        }
    }

    /// Largest `|Π + Πᵀ|` entry; zero for every bivector built through this type.
    pub fn antisymmetry_defect(&self) -> f64 {
        (&self.matrix + self.matrix.transpose()).amax()
    }
}

impl std::ops::AddAssign for Bivector {
    fn add_assign(&mut self, rhs: Bivector) {
        self.matrix += rhs.matrix;
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRepr {
    y: Vec<f64>,
    x: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Serialize for PhasePoint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PointRepr {
            y: self.y().to_vec(),
            x: self.x().to_vec(),
            p: self.p().to_vec(),
            q: self.q().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhasePoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PointRepr::deserialize(deserializer)?;
        let point = PhasePoint::new(&repr.y, &repr.x, &repr.p, &repr.q)
            .map_err(serde::de::Error::custom)?;
        if !point.is_finite() {
            return Err(serde::de::Error::custom("phase point has non-finite components"));
        }
        Ok(point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_layout() {
        let m = PhasePoint::new(&[1.0, 2.0], &[3.0, 4.0], &[5.0], &[6.0]).unwrap();
        let d = m.dims();
        assert_eq!(d.len(), 6);
        assert_eq!(m.y(), &[1.0, 2.0]);
        assert_eq!(m.x(), &[3.0, 4.0]);
        assert_eq!(m.p(), &[5.0]);
        assert_eq!(m.q(), &[6.0]);
        assert_eq!(m[d.q_index(0)], 6.0);
        assert_eq!(m[d.x_index(1)], 4.0);
    }

    #[test]
    fn rejects_empty_blocks() {
        assert!(PhasePoint::new(&[], &[], &[1.0], &[1.0]).is_err());
        assert!(PhasePoint::new(&[1.0], &[1.0, 2.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn slow_canonical_contracts_to_slow_hamiltonian_field() {
        let dims = Dims::new(1, 1).unwrap();
        let pi = Bivector::slow_canonical(dims);
        // dH = (Hy, Hx, Hp, Hq) = (0, 0, 2, 3) → (0, 0, −Hq, Hp)
        let dh = Covector::from_slice(dims, &[0.0, 0.0, 2.0, 3.0]).unwrap();
        assert_eq!(pi.contract(&dh).as_slice(), &[0.0, 0.0, -3.0, 2.0]);
        assert_eq!(pi.antisymmetry_defect(), 0.0);
    }

    #[test]
    fn point_json_shape() {
        let m = PhasePoint::new(&[1.0], &[0.5], &[0.25], &[-1.0]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"y":[1.0],"x":[0.5],"p":[0.25],"q":[-1.0]}"#);
        let back: PhasePoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<PhasePoint>(r#"{"y":[1.0],"x":[],"p":[0.0],"q":[0.0]}"#).is_err());
    }
}
