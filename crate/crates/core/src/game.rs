//! The electric ride-hailing charging game.
//!
//! Each of `N` companies splits its fleet of `M_i` vehicles across `d`
//! districts. District `m` carries a revenue potential `W_m` that is shared in
//! proportion to fleet presence, diluted by an abandonment term `Delta_m`, and
//! every vehicle pays the district's charging price `pi_m`:
//!
//! ```text
//! U_i(x; pi) = sum_m W_m * x_im / (S_m + Delta_m) - x_im * pi_m,   S_m = sum_j x_jm
//! ```
//!
//! The regulator (leader) wants the aggregate fleet distribution to match a
//! target `xi*` and pays the squared distance between the two.

use alloc::vec;
use alloc::vec::Vec;

use crate::equilibrium::Game;
use crate::{Error, Result};

/// Aggregate fleet size below which the leader cost is undefined.
pub const IDLE_THRESHOLD: f64 = 1e-9;

/// Per-district fleet cap.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum FleetCap {
    Uniform(f64),
    PerDistrict(Vec<f64>),
}

/// A lower-level game instance together with the leader's target.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GameParams {
    #[cfg_attr(feature = "serde", serde(rename = "N"))]
    pub n: usize,
    pub d: usize,
    #[cfg_attr(feature = "serde", serde(rename = "W"))]
    pub w: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "Delta"))]
    pub delta: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub m: Vec<f64>,
    /// `None` caps each company's per-district allocation at its own fleet
    /// size, so only the budget constraint can bind.
    #[cfg_attr(feature = "serde", serde(default))]
    pub x_max: Option<FleetCap>,
    pub pi_min: f64,
    pub pi_max: f64,
    pub xi_star: Vec<f64>,
}

impl GameParams {
    /// Two districts (outskirts, downtown), three companies.
    pub fn reference() -> Self {
        GameParams {
            n: 3,
            d: 2,
            w: vec![30.0, 60.0],
            delta: vec![0.1, 0.5],
            m: vec![2.0, 4.0, 6.0],
            x_max: None,
            pi_min: 0.1,
            pi_max: 5.0,
            xi_star: vec![0.5, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
        if self.n == 0 || self.d == 0 {
            return bad("N and d must be positive");
        }
        if self.w.len() != self.d || self.delta.len() != self.d || self.xi_star.len() != self.d {
            return bad("W, Delta and xi_star must have length d");
        }
        if self.m.len() != self.n {
            return bad("M must have length N");
        }
        if !self.w.iter().all(|&v| v.is_finite() && v > 0.0) {
            return bad("W must be strictly positive");
        }
        if !self.delta.iter().all(|&v| v.is_finite() && v > 0.0) {
            return bad("Delta must be strictly positive");
        }
        if !self.m.iter().all(|&v| v.is_finite() && v > 0.0) {
            return bad("M must be strictly positive");
        }
        if !(self.pi_min >= 0.0 && self.pi_min < self.pi_max && self.pi_max.is_finite()) {
            return bad("need 0 <= pi_min < pi_max");
        }
        if !self.xi_star.iter().all(|&v| (0.0..=1.0).contains(&v)) {
            return bad("xi_star entries must lie in [0, 1]");
        }
        if libm::fabs(self.xi_star.iter().sum::<f64>() - 1.0) > 1e-9 {
            return bad("xi_star must sum to 1");
        }
        match &self.x_max {
            None => {}
            Some(FleetCap::Uniform(c)) if *c >= 0.0 && c.is_finite() => {}
            Some(FleetCap::PerDistrict(c))
                if c.len() == self.d && c.iter().all(|&v| v >= 0.0 && v.is_finite()) => {}
            Some(_) => return bad("x_max must be a non-negative scalar or length-d vector"),
        }
        Ok(())
    }

    /// Upper bound on `x_{i,m}`.
    pub fn cap(&self, i: usize, m: usize) -> f64 {
        match &self.x_max {
            None => self.m[i],
            Some(FleetCap::Uniform(c)) => *c,
            Some(FleetCap::PerDistrict(c)) => c[m],
        }
    }
}

/// Leader action: one charging price per district.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct PriceVector(pub Vec<f64>);

impl PriceVector {
    pub fn new(prices: Vec<f64>) -> Self {
        PriceVector(prices)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn within(&self, params: &GameParams) -> bool {
        self.0.len() == params.d
            && self
                .0
                .iter()
                .all(|&p| p >= params.pi_min && p <= params.pi_max)
    }
}

impl From<Vec<f64>> for PriceVector {
    fn from(v: Vec<f64>) -> Self {
        PriceVector(v)
    }
}

/// One company's allocation across districts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct FleetAllocation(pub Vec<f64>);

impl FleetAllocation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// All companies' allocations, stored block-contiguously (`N * d` entries).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointAllocation {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl JointAllocation {
    pub fn zeros(n: usize, d: usize) -> Self {
        JointAllocation {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_stacked(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        Ok(JointAllocation { n, d, data })
    }

    pub fn from_blocks(blocks: &[FleetAllocation]) -> Result<Self> {
        let n = blocks.len();
        let d = blocks.first().map_or(0, |b| b.0.len());
        let mut data = Vec::with_capacity(n * d);
        for b in blocks {
            if b.0.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.0.len(),
                });
            }
            data.extend_from_slice(&b.0);
        }
        Ok(JointAllocation { n, d, data })
    }

    pub fn followers(&self) -> usize {
        self.n
    }

    pub fn districts(&self) -> usize {
        self.d
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_blocks(self) -> Vec<FleetAllocation> {
        self.data
            .chunks(self.d.max(1))
            .map(|c| FleetAllocation(c.to_vec()))
            .collect()
    }

    /// Per-district totals `S_m`.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.d];
        for block in self.data.chunks(self.d.max(1)) {
            for (acc, v) in s.iter_mut().zip(block) {
                *acc += v;
            }
        }
        s
    }

    pub fn distance(&self, other: &JointAllocation) -> f64 {
        libm::sqrt(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        )
    }

    pub fn scaled(&self, c: f64) -> JointAllocation {
        JointAllocation {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

/// Company `i`'s profit at profile `x` under prices `pi`.
pub fn utility(i: usize, x: &JointAllocation, pi: &PriceVector, params: &GameParams) -> f64 {
    let s = x.aggregate();
    x.block(i)
        .iter()
        .enumerate()
        .map(|(m, &xim)| params.w[m] * xim / (s[m] + params.delta[m]) - xim * pi.0[m])
        .sum()
}

/// Stacked `v_i = -grad_{x_i} U_i`, length `N * d`.
pub fn pseudogradient(x: &JointAllocation, pi: &PriceVector, params: &GameParams) -> Vec<f64> {
    let mut out = vec![0.0; x.as_slice().len()];
    pseudogradient_into(x, pi, params, &mut out);
    out
}

pub fn pseudogradient_into(
    x: &JointAllocation,
    pi: &PriceVector,
    params: &GameParams,
    out: &mut [f64],
) {
    let (n, d) = (params.n, params.d);
    let xs = x.as_slice();
    for m in 0..d {
        let s: f64 = (0..n).map(|i| xs[i * d + m]).sum();
        let denom = s + params.delta[m];
        let scale = params.w[m] / (denom * denom);
        for i in 0..n {
            out[i * d + m] = pi.0[m] - scale * ((s - xs[i * d + m]) + params.delta[m]);
        }
    }
}

/// Euclidean projection onto `{z : 0 <= z_m <= cap_m, sum z <= budget}`.
pub fn project_box_budget(y: &[f64], caps: &[f64], budget: f64) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    project_box_budget_into(y, caps, budget, &mut out);
    out
}

/// Which piece of `clip(y - lambda, 0, cap)` a coordinate sits on.
#[derive(PartialEq, Eq, Clone, Copy)]
enum Piece {
    Zero,
    Free,
    Capped,
}

fn piece(v: f64, lambda: f64, cap: f64) -> Piece {
    let z = v - lambda;
    if z <= 0.0 {
        Piece::Zero
    } else if z >= cap {
        Piece::Capped
    } else {
        Piece::Free
    }
}

/// Allocation-free [`project_box_budget`].
///
/// Bisection on the budget multiplier `lambda`, with
/// `z(lambda) = clip(y - lambda, 0, cap)`. Once no coordinate changes piece
/// inside the bracket, `sum z(lambda)` is affine there and the root is solved
/// for directly.
pub fn project_box_budget_into(y: &[f64], caps: &[f64], budget: f64, out: &mut [f64]) {
    let clipped = |lambda: f64| -> f64 {
        y.iter()
            .zip(caps)
            .map(|(&v, &c)| (v - lambda).clamp(0.0, c))
            .sum()
    };
    let lambda = if clipped(0.0) <= budget {
        0.0
    } else {
        // at lambda = max(y) every coordinate clips to zero, which is feasible
        let mut lo = 0.0;
        let mut hi = y.iter().copied().fold(0.0, f64::max);
        let mut root = hi;
        for _ in 0..200 {
            // sum z(lambda) is affine on [lo, hi] when no kink y_m or
            // y_m - cap_m lies strictly inside
            let inside = |b: f64| lo < b && b < hi;
            let affine = y.iter().zip(caps).all(|(&v, &c)| !inside(v) && !inside(v - c));
            if affine {
                let at = 0.5 * (lo + hi);
                let (free_sum, free_count, capped) =
                    y.iter().zip(caps).fold((0.0, 0usize, 0.0), |(fs, fc, cs), (&v, &c)| {
                        match piece(v, at, c) {
                            Piece::Zero => (fs, fc, cs),
                            Piece::Capped => (fs, fc, cs + c),
                            Piece::Free => (fs + v, fc + 1, cs),
                        }
                    });
                if free_count > 0 {
                    root = ((free_sum + capped - budget) / free_count as f64).clamp(lo, hi);
                    if clipped(root) > budget + 1e-12 {
                        root = hi;
                    }
                } else {
                    root = hi;
                }
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-12 * (1.0 + hi) {
                root = hi;
                break;
            }
            if clipped(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        root
    };
    for ((o, &v), &c) in out.iter_mut().zip(y).zip(caps) {
        *o = (v - lambda).clamp(0.0, c);
    }
}

/// Projection of `y` onto company `i`'s feasible set.
pub fn project_feasible(y: &[f64], i: usize, params: &GameParams) -> FleetAllocation {
    let caps: Vec<f64> = (0..params.d).map(|m| params.cap(i, m)).collect();
    FleetAllocation(project_box_budget(y, &caps, params.m[i]))
}

/// Squared distance between the achieved fleet distribution and the target.
pub fn leader_cost(x: &JointAllocation, params: &GameParams) -> Result<f64> {
    let s = x.aggregate();
    let total: f64 = s.iter().sum();
    if total <= IDLE_THRESHOLD {
        return Err(Error::AllFleetsIdle { total });
    }
    Ok(s.iter()
        .zip(&params.xi_star)
        .map(|(&sm, &target)| {
            let dev = sm / total - target;
            dev * dev
        })
        .sum())
}

/// [`Game`] adapter for [`GameParams`].
#[derive(Debug, Clone)]
pub struct RideHailGame {
    params: GameParams,
    caps: Vec<Vec<f64>>,
}

impl RideHailGame {
    pub fn new(params: GameParams) -> Result<Self> {
        params.validate()?;
        let caps = (0..params.n)
            .map(|i| (0..params.d).map(|m| params.cap(i, m)).collect())
            .collect();
        Ok(RideHailGame { params, caps })
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }
}

impl Game for RideHailGame {
    fn followers(&self) -> usize {
        self.params.n
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn pseudogradient(&self, x: &JointAllocation, pi: &PriceVector, out: &mut [f64]) {
        pseudogradient_into(x, pi, &self.params, out);
    }

    fn block_gradient(&self, i: usize, x: &JointAllocation, pi: &PriceVector, out: &mut [f64]) {
        let p = &self.params;
        let xi = x.block(i);
        for m in 0..p.d {
            let s: f64 = (0..p.n).map(|j| x.block(j)[m]).sum();
            let denom = s + p.delta[m];
            out[m] = pi.0[m] - p.w[m] * ((s - xi[m]) + p.delta[m]) / (denom * denom);
        }
    }

    fn project(&self, i: usize, y: &[f64], out: &mut [f64]) {
        project_box_budget_into(y, &self.caps[i], self.params.m[i], out);
    }

    fn utility(&self, i: usize, x: &JointAllocation, pi: &PriceVector) -> f64 {
        utility(i, x, pi, &self.params)
    }

    /// Uniform split `M_i / d`, clipped into the box.
    fn initial_point(&self) -> JointAllocation {
        let p = &self.params;
        let mut x = JointAllocation::zeros(p.n, p.d);
        for i in 0..p.n {
            let share = p.m[i] / p.d as f64;
            let y: Vec<f64> = (0..p.d).map(|_| share).collect();
            let z = project_box_budget(&y, &self.caps[i], p.m[i]);
            x.block_mut(i).copy_from_slice(&z);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(w: f64, delta: f64, m: f64) -> GameParams {
        GameParams {
            n: 1,
            d: 1,
            w: vec![w],
            delta: vec![delta],
            m: vec![m],
            x_max: None,
            pi_min: 0.1,
            pi_max: 5.0,
            xi_star: vec![1.0],
        }
    }

    #[test]
    fn idle_company_earns_nothing() {
        let p = GameParams::reference();
        let x = JointAllocation::from_stacked(3, 2, vec![0.0, 0.0, 1.0, 3.0, 2.0, 2.5]).unwrap();
        let pi = PriceVector::new(vec![1.3, 4.2]);
        assert_eq!(utility(0, &x, &pi, &p), 0.0);
    }

    #[test]
    fn utility_single_district() {
        let p = single(30.0, 0.1, 10.0);
        let x = JointAllocation::from_stacked(1, 1, vec![1.0]).unwrap();
        let u = utility(0, &x, &PriceVector::new(vec![1.0]), &p);
        assert_relative_eq!(u, 30.0 / 1.1 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_player_gradient_closed_form() {
        let p = single(30.0, 0.1, 10.0);
        let x = JointAllocation::from_stacked(1, 1, vec![0.7]).unwrap();
        let g = pseudogradient(&x, &PriceVector::new(vec![1.5]), &p);
        assert_relative_eq!(g[0], 1.5 - 30.0 * 0.1 / (0.8 * 0.8), epsilon = 1e-12);
    }

    #[test]
    fn twin_followers_share_gradient() {
        let mut p = GameParams::reference();
        p.m = vec![4.0, 4.0, 6.0];
        let x = JointAllocation::from_stacked(3, 2, vec![1.5, 2.0, 1.5, 2.0, 3.0, 1.0]).unwrap();
        let g = pseudogradient(&x, &PriceVector::new(vec![1.0, 2.0]), &p);
        assert_eq!(g[0..2], g[2..4]);
    }

    #[test]
    fn projection_examples() {
        let p = GameParams {
            n: 1,
            d: 2,
            w: vec![1.0, 1.0],
            delta: vec![1.0, 1.0],
            m: vec![1.0],
            x_max: Some(FleetCap::Uniform(1.0)),
            pi_min: 0.0,
            pi_max: 1.0,
            xi_star: vec![0.5, 0.5],
        };
        let z = project_feasible(&[1.0, 1.0], 0, &p);
        assert_relative_eq!(z.0[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(z.0[1], 0.5, epsilon = 1e-12);
        let feasible = [0.2, 0.3];
        assert_eq!(project_feasible(&feasible, 0, &p).0, feasible.to_vec());
    }

    #[test]
    fn projection_respects_caps() {
        let z = project_box_budget(&[5.0, -1.0, 0.4], &[1.0, 1.0, 1.0], 10.0);
        assert_eq!(z, vec![1.0, 0.0, 0.4]);
        let z = project_box_budget(&[5.0, 2.0, 0.4], &[1.0, 3.0, 1.0], 2.0);
        assert!(z.iter().sum::<f64>() <= 2.0 + 1e-12);
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(z[1], 1.0, epsilon = 1e-12);
        assert_eq!(z[2], 0.0);
    }

    #[test]
    fn leader_cost_examples() {
        let p = GameParams {
            n: 1,
            d: 2,
            w: vec![1.0, 1.0],
            delta: vec![1.0, 1.0],
            m: vec![1.0],
            x_max: None,
            pi_min: 0.0,
            pi_max: 1.0,
            xi_star: vec![0.5, 0.5],
        };
        let x = JointAllocation::from_stacked(1, 2, vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(leader_cost(&x, &p).unwrap(), 0.5, epsilon = 1e-15);
        let x = JointAllocation::from_stacked(1, 2, vec![0.3, 0.3]).unwrap();
        assert_eq!(leader_cost(&x, &p).unwrap(), 0.0);
        let idle = JointAllocation::zeros(1, 2);
        assert!(matches!(leader_cost(&idle, &p), Err(Error::AllFleetsIdle { .. })));
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = GameParams::reference();
        p.delta[1] = 0.0;
        assert!(p.validate().is_err());
        let mut p = GameParams::reference();
        p.xi_star = vec![0.7, 0.7];
        assert!(p.validate().is_err());
        let mut p = GameParams::reference();
        p.m.pop();
        assert!(p.validate().is_err());
        assert!(GameParams::reference().validate().is_ok());
    }
}
