//! Points on the flat torus, their lifts to the universal cover, and distances.

use crate::error::{LabError, Result};

/// A point of the torus with coordinates normalized into `[0,1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPoint<const D: usize> {
    coords: [f64; D],
}

/// A point of the universal cover.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftPoint<const D: usize> {
    pub coords: [f64; D],
}

/// A tangent vector with its base point; the metric is chosen by the caller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector<const D: usize> {
    pub base: LiftPoint<D>,
    pub dir: [f64; D],
}

#[inline]
pub fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    // x.floor() can round so that r == 1.0 for tiny negative x
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl<const D: usize> TorusPoint<D> {
    /// Builds a torus point, reducing the coordinates mod 1.
    pub fn new(coords: [f64; D]) -> Result<Self> {
        wrap(&LiftPoint { coords })
    }

    pub fn coords(&self) -> &[f64; D] {
        &self.coords
    }

    pub fn as_lift(&self) -> LiftPoint<D> {
        LiftPoint { coords: self.coords }
    }
}

impl<const D: usize> LiftPoint<D> {
    pub fn new(coords: [f64; D]) -> Self {
        Self { coords }
    }
}

impl<const D: usize> TangentVector<D> {
    pub fn euclidean_norm(&self) -> f64 {
        self.dir.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn wrap<const D: usize>(p: &LiftPoint<D>) -> Result<TorusPoint<D>> {
    if p.coords.iter().any(|x| !x.is_finite()) {
        return Err(LabError::InvalidInput(format!(
            "non-finite lift coordinates {:?}",
            p.coords
        )));
    }
    let mut c = [0.0; D];
    for (o, x) in c.iter_mut().zip(p.coords.iter()) {
        *o = frac(*x);
    }
    Ok(TorusPoint { coords: c })
}

/// The lift of `p` lying in the unit box centered at `anchor`.
pub fn lift_near<const D: usize>(p: &TorusPoint<D>, anchor: &LiftPoint<D>) -> LiftPoint<D> {
    let mut c = [0.0; D];
    for i in 0..D {
        let x = p.coords[i];
        let k = (anchor.coords[i] - x).round();
        c[i] = x + k;
    }
    LiftPoint { coords: c }
}

/// Shortest representative of a displacement modulo the integer lattice.
#[inline]
pub fn min_image(d: f64) -> f64 {
    d - d.round()
}

pub fn torus_distance<const D: usize>(a: &TorusPoint<D>, b: &TorusPoint<D>) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = min_image(a.coords[i] - b.coords[i]);
        s += d * d;
    }
    s.sqrt()
}

pub fn lift_distance<const D: usize>(a: &LiftPoint<D>, b: &LiftPoint<D>) -> f64 {
    a.coords
        .iter()
        .zip(b.coords.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
