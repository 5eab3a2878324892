//! Switch units: learnable 2-to-2 functions applied to adjacent pairs.
//!
//! The residual unit (RSU) computes, for a concatenated pair `i = [i1, i2]`:
//!
//! ```text
//! g = act(norm(Z i))
//! c = W g + B
//! o = sigmoid(S) ⊙ i + h · c
//! ```
//!
//! `h` is a fixed constant chosen with `S` so that a signal of amplitude 0.25
//! keeps that amplitude through the unit at initialization. The gated unit
//! is the GRU-style baseline it replaces.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Graph, Permutation, Real, Tensor, LAYERNORM_EPS};

/// Residual-branch amplitude the initialization targets.
pub const SIGNAL_AMPLITUDE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Residual {
    /// `sigmoid(S) ⊙ i + h · c`
    Scaled,
    /// `i + h · c`
    ConstantOne,
    /// `c`
    None,
}

/// Architecture switches for the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub layernorm: bool,
    pub activation: Activation,
    pub residual: Residual,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            layernorm: true,
            activation: Activation::Gelu,
            residual: Residual::Scaled,
        }
    }
}

// ---------------------------------------------------------------- params

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Residual switch unit parameters. `P` is the storage: a [`Tensor`] for a
/// stored model, a graph node once bound for a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RsuParams<P> {
    /// `[2m, hidden]`
    pub z: P,
    /// `[hidden, 2m]`
    pub w: P,
    /// `[2m]`
    pub b: P,
    /// Residual gate logits, `[2m]`.
    pub s: P,
    /// Fixed residual-branch scale; not trained.
    pub h: f64,
}

impl<P> RsuParams<P> {
    pub fn map<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> RsuParams<Q> {
        RsuParams {
            z: f(&join(prefix, "z"), &self.z),
            w: f(&join(prefix, "w"), &self.w),
            b: f(&join(prefix, "b"), &self.b),
            s: f(&join(prefix, "s"), &self.s),
            h: self.h,
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a P)) {
        f(&join(prefix, "z"), &self.z);
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b"), &self.b);
        f(&join(prefix, "s"), &self.s);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut P)) {
        f(&join(prefix, "z"), &mut self.z);
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
        f(&join(prefix, "s"), &mut self.s);
    }
}

impl<T: Real> RsuParams<Tensor<T>> {
    pub fn feature_maps(&self) -> usize {
        self.z.shape()[0] / 2
    }

    pub fn hidden(&self) -> usize {
        self.z.shape()[1]
    }

    /// Overrides the unit into the identity map: `sigmoid(S) = 1` exactly, `h = 0`.
    pub fn set_identity(&mut self) {
        for v in self.s.data_mut() {
            *v = T::infinity();
        }
        self.h = 0.0;
    }
}

/// `h = sqrt(1 − r²) · 0.25`.
pub fn residual_scale(r: f64) -> f64 {
    (1.0 - r * r).sqrt() * SIGNAL_AMPLITUDE
}

/// `sigmoid⁻¹(r) = ln(r / (1 − r))`.
pub fn inverse_sigmoid(r: f64) -> f64 {
    (r / (1.0 - r)).ln()
}

/// Amplitude-preserving RSU initialization.
///
/// `Z` and `W` are uniform with variance `1/fan_in`, so the normalized
/// hidden activation keeps unit scale through `W`. With `S = sigmoid⁻¹(r)`
/// and `h = sqrt(1 − r²)·0.25`, an input of amplitude 0.25 leaves with
/// amplitude close to 0.25.
pub fn rsu_init<T: Real, R: Rng + ?Sized>(
    feature_maps: usize,
    hidden: usize,
    r: f64,
    rng: &mut R,
) -> Result<RsuParams<Tensor<T>>> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid(format!("residual init constant r={r} must lie in (0, 1)")));
    }
    if feature_maps == 0 || hidden == 0 {
        return Err(Error::invalid("feature maps and hidden size must be positive"));
    }
    let pair = 2 * feature_maps;
    let z_std = (1.0 / pair as f64).sqrt();
    let w_std = (1.0 / hidden as f64).sqrt();
    Ok(RsuParams {
        z: Tensor::uniform([pair, hidden], z_std, rng),
        w: Tensor::uniform([hidden, pair], w_std, rng),
        b: Tensor::zeros([pair]),
        s: Tensor::full([pair], T::lit(inverse_sigmoid(r))),
        h: residual_scale(r),
    })
}

/// Gated switch unit parameters.
///
/// Reset and update gates map `2m -> 2m` (they gate the concatenated pair);
/// the candidates map `2m -> m` so that `[c1, c2]` has extent `2m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedSuParams<P> {
    pub reset1_w: P,
    pub reset1_b: P,
    pub reset2_w: P,
    pub reset2_b: P,
    pub cand1_w: P,
    pub cand1_b: P,
    pub cand2_w: P,
    pub cand2_b: P,
    pub update_w: P,
    pub update_b: P,
}

impl<P> GatedSuParams<P> {
    pub fn map<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> GatedSuParams<Q> {
        GatedSuParams {
            reset1_w: f(&join(prefix, "reset1_w"), &self.reset1_w),
            reset1_b: f(&join(prefix, "reset1_b"), &self.reset1_b),
            reset2_w: f(&join(prefix, "reset2_w"), &self.reset2_w),
            reset2_b: f(&join(prefix, "reset2_b"), &self.reset2_b),
            cand1_w: f(&join(prefix, "cand1_w"), &self.cand1_w),
            cand1_b: f(&join(prefix, "cand1_b"), &self.cand1_b),
            cand2_w: f(&join(prefix, "cand2_w"), &self.cand2_w),
            cand2_b: f(&join(prefix, "cand2_b"), &self.cand2_b),
            update_w: f(&join(prefix, "update_w"), &self.update_w),
            update_b: f(&join(prefix, "update_b"), &self.update_b),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a P)) {
        f(&join(prefix, "reset1_w"), &self.reset1_w);
        f(&join(prefix, "reset1_b"), &self.reset1_b);
        f(&join(prefix, "reset2_w"), &self.reset2_w);
        f(&join(prefix, "reset2_b"), &self.reset2_b);
        f(&join(prefix, "cand1_w"), &self.cand1_w);
        f(&join(prefix, "cand1_b"), &self.cand1_b);
        f(&join(prefix, "cand2_w"), &self.cand2_w);
        f(&join(prefix, "cand2_b"), &self.cand2_b);
        f(&join(prefix, "update_w"), &self.update_w);
        f(&join(prefix, "update_b"), &self.update_b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut P)) {
        f(&join(prefix, "reset1_w"), &mut self.reset1_w);
        f(&join(prefix, "reset1_b"), &mut self.reset1_b);
        f(&join(prefix, "reset2_w"), &mut self.reset2_w);
        f(&join(prefix, "reset2_b"), &mut self.reset2_b);
        f(&join(prefix, "cand1_w"), &mut self.cand1_w);
        f(&join(prefix, "cand1_b"), &mut self.cand1_b);
        f(&join(prefix, "cand2_w"), &mut self.cand2_w);
        f(&join(prefix, "cand2_b"), &mut self.cand2_b);
        f(&join(prefix, "update_w"), &mut self.update_w);
        f(&join(prefix, "update_b"), &mut self.update_b);
    }
}

pub fn gated_su_init<T: Real, R: Rng + ?Sized>(
    feature_maps: usize,
    rng: &mut R,
) -> Result<GatedSuParams<Tensor<T>>> {
    if feature_maps == 0 || feature_maps % 2 != 0 {
        return Err(Error::invalid(format!(
            "gated switch unit needs an even, positive feature count, got {feature_maps}"
        )));
    }
    let pair = 2 * feature_maps;
    let std = (1.0 / pair as f64).sqrt();
    let mut weight = |cols: usize| Tensor::uniform([pair, cols], std, rng);
    Ok(GatedSuParams {
        reset1_w: weight(pair),
        reset1_b: Tensor::zeros([pair]),
        reset2_w: weight(pair),
        reset2_b: Tensor::zeros([pair]),
        cand1_w: weight(feature_maps),
        cand1_b: Tensor::zeros([feature_maps]),
        cand2_w: weight(feature_maps),
        cand2_b: Tensor::zeros([feature_maps]),
        update_w: weight(pair),
        update_b: Tensor::zeros([pair]),
    })
}

/// Either switch-unit variant.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitParams<P> {
    Residual(RsuParams<P>),
    Gated(GatedSuParams<P>),
}

impl<P> UnitParams<P> {
    pub fn map<Q>(&self, prefix: &str, f: &mut dyn FnMut(&str, &P) -> Q) -> UnitParams<Q> {
        match self {
            UnitParams::Residual(p) => UnitParams::Residual(p.map(prefix, f)),
            UnitParams::Gated(p) => UnitParams::Gated(p.map(prefix, f)),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a P)) {
        match self {
            UnitParams::Residual(p) => p.visit(prefix, f),
            UnitParams::Gated(p) => p.visit(prefix, f),
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut P)) {
        match self {
            UnitParams::Residual(p) => p.visit_mut(prefix, f),
            UnitParams::Gated(p) => p.visit_mut(prefix, f),
        }
    }
}

// --------------------------------------------------------------- forward

fn check_pairs<T: Real>(pairs: &Tensor<T>, feature_maps: usize) -> Result<()> {
    if pairs.features() != 2 * feature_maps {
        return Err(Error::dim(format!(
            "switch unit expects pairs with {} features, got shape {:?}",
            2 * feature_maps,
            pairs.shape()
        )));
    }
    Ok(())
}

/// Applies the residual switch unit to every row of `pairs` (`[.., 2m]`).
pub fn rsu_forward<T: Real, G: Graph<T>>(
    g: &mut G,
    p: &RsuParams<G::Node>,
    pairs: &G::Node,
    flags: &AblationFlags,
) -> Result<G::Node> {
    check_pairs(g.value(pairs), g.value(&p.z).shape()[0] / 2)?;
    let hidden = g.affine(pairs, &p.z, None)?;
    let normed = if flags.layernorm {
        let y = g.layernorm(&hidden, LAYERNORM_EPS);
        drop(hidden);
        y
    } else {
        hidden
    };
    let act = match flags.activation {
        Activation::Gelu => g.gelu(&normed),
        Activation::Relu => g.relu(&normed),
    };
    drop(normed);
    let c = g.affine(&act, &p.w, Some(&p.b))?;
    drop(act);
    match flags.residual {
        Residual::Scaled => {
            let gate = g.sigmoid(&p.s);
            let kept = g.mul_features(pairs, &gate)?;
            let update = g.scale_shift(&c, p.h, 0.0);
            drop(c);
            g.add(&kept, &update)
        }
        Residual::ConstantOne => {
            let update = g.scale_shift(&c, p.h, 0.0);
            drop(c);
            g.add(pairs, &update)
        }
        Residual::None => Ok(c),
    }
}

fn swap_half_map(pair_width: usize) -> Result<Arc<Permutation>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Permutation>>>> = OnceLock::new();
    let m = pair_width / 2;
    if pair_width % 2 != 0 || m % 2 != 0 || m == 0 {
        return Err(Error::invalid(format!(
            "swap_half needs an even feature count, got {m}"
        )));
    }
    let mut cache = CACHE.get_or_init(Default::default).lock().expect("swap cache poisoned");
    if let Some(p) = cache.get(&pair_width) {
        return Ok(p.clone());
    }
    let half = m / 2;
    let idx = (0..pair_width)
        .map(|j| match j {
            j if j < half => j,
            j if j < m => m + j,
            j if j < m + half => j,
            j => j - m,
        })
        .collect();
    let perm = Arc::new(Permutation::new(idx)?);
    cache.insert(pair_width, perm.clone());
    Ok(perm)
}

/// Exchanges the latter halves of two feature vectors:
/// `[s1[..m/2] ‖ s2[m/2..], s2[..m/2] ‖ s1[m/2..]]`.
pub fn swap_half<T: Real>(s1: &Tensor<T>, s2: &Tensor<T>) -> Result<Tensor<T>> {
    if s1.shape() != s2.shape() || s1.rank() != 1 {
        return Err(Error::dim(format!(
            "swap_half: need two equal vectors, got {:?} and {:?}",
            s1.shape(),
            s2.shape()
        )));
    }
    let m = s1.len();
    let joined = crate::numcore::kernels::concat_features(s1, s2)?;
    crate::numcore::kernels::gather_features(&joined, &*swap_half_map(2 * m)?)
}

/// Graph version of [`swap_half`] over rows of concatenated pairs `[.., 2m]`.
pub fn swap_half_pairs<T: Real, G: Graph<T>>(g: &mut G, pairs: &G::Node) -> Result<G::Node> {
    let idx = swap_half_map(g.value(pairs).features())?;
    g.gather_features(pairs, &idx)
}

/// Applies the gated switch unit to every row of `pairs` (`[.., 2m]`).
pub fn gated_su_forward<T: Real, G: Graph<T>>(
    g: &mut G,
    p: &GatedSuParams<G::Node>,
    pairs: &G::Node,
) -> Result<G::Node> {
    check_pairs(g.value(pairs), g.value(&p.cand1_w).shape()[1])?;
    let gate = |g: &mut G, w: &G::Node, b: &G::Node| -> Result<G::Node> {
        let pre = g.affine(pairs, w, Some(b))?;
        Ok(g.sigmoid(&pre))
    };
    let r1 = gate(g, &p.reset1_w, &p.reset1_b)?;
    let r2 = gate(g, &p.reset2_w, &p.reset2_b)?;
    let u = gate(g, &p.update_w, &p.update_b)?;
    let candidate = |g: &mut G, r: &G::Node, w: &G::Node, b: &G::Node| -> Result<G::Node> {
        let gated = g.mul(r, pairs)?;
        let pre = g.affine(&gated, w, Some(b))?;
        Ok(g.tanh(&pre))
    };
    let c1 = candidate(g, &r1, &p.cand1_w, &p.cand1_b)?;
    let c2 = candidate(g, &r2, &p.cand2_w, &p.cand2_b)?;
    let c = g.concat_features(&c1, &c2)?;
    let swapped = swap_half_pairs(g, pairs)?;
    let keep = g.mul(&u, &swapped)?;
    let one_minus_u = g.scale_shift(&u, -1.0, 1.0);
    let fresh = g.mul(&one_minus_u, &c)?;
    g.add(&keep, &fresh)
}

pub fn unit_forward<T: Real, G: Graph<T>>(
    g: &mut G,
    p: &UnitParams<G::Node>,
    pairs: &G::Node,
    flags: &AblationFlags,
) -> Result<G::Node> {
    match p {
        UnitParams::Residual(p) => rsu_forward(g, p, pairs, flags),
        UnitParams::Gated(p) => gated_su_forward(g, p, pairs),
    }
}
