//! Perfect shuffle and inverse shuffle over `n = 2^k` addresses.
//!
//! The perfect shuffle sends the element at address `a` to the address whose
//! `k`-bit representation is `a` rotated left by one bit (`101 -> 011`); the
//! inverse shuffle rotates right. Index maps are built once per `(k,
//! direction)` and shared.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::numcore::Permutation;

/// Largest supported address width (sequences of up to 2^24 elements).
pub const MAX_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShuffleSpec {
    bits: u32,
    direction: Direction,
}

impl ShuffleSpec {
    pub fn new(bits: u32, direction: Direction) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(Error::invalid(format!(
                "shuffle address width {bits} outside 1..={MAX_BITS}"
            )));
        }
        Ok(Self { bits, direction })
    }

    pub fn for_length(n: usize, direction: Direction) -> Result<Self> {
        Self::new(log2_exact(n)?, direction)
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn len(self) -> usize {
        1 << self.bits
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn direction(self) -> Direction {
        self.direction
    }

    /// Cached index map for this shuffle.
    pub fn permutation(self) -> Arc<Permutation> {
        static CACHE: OnceLock<RwLock<HashMap<ShuffleSpec, Arc<Permutation>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(p) = cache.read().expect("shuffle cache poisoned").get(&self) {
            return p.clone();
        }
        let rotate = match self.direction {
            Direction::Forward => rotl_unchecked,
            Direction::Inverse => rotr_unchecked,
        };
        let map = (0..self.len()).map(|a| rotate(a, self.bits)).collect();
        let perm = Arc::new(Permutation::new(map).expect("rotation is a bijection"));
        cache
            .write()
            .expect("shuffle cache poisoned")
            .entry(self)
            .or_insert(perm)
            .clone()
    }
}

/// Exact base-2 logarithm; errors unless `n` is a power of two.
pub fn log2_exact(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("length {n} is not a power of two")));
    }
    Ok(n.trailing_zeros())
}

#[inline]
fn rotl_unchecked(a: usize, bits: u32) -> usize {
    let mask = (1usize << bits) - 1;
    ((a << 1) | (a >> (bits - 1))) & mask
}

#[inline]
fn rotr_unchecked(a: usize, bits: u32) -> usize {
    let mask = (1usize << bits) - 1;
    ((a >> 1) | (a << (bits - 1))) & mask
}

fn check_address(a: usize, bits: u32) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(Error::invalid(format!("address width {bits} outside 1..={MAX_BITS}")));
    }
    if a >= 1 << bits {
        return Err(Error::invalid(format!("address {a} does not fit in {bits} bits")));
    }
    Ok(())
}

/// One-bit left circular rotation of a `bits`-wide address.
pub fn rotl_index(a: usize, bits: u32) -> Result<usize> {
    check_address(a, bits)?;
    Ok(rotl_unchecked(a, bits))
}

/// One-bit right circular rotation of a `bits`-wide address.
pub fn rotr_index(a: usize, bits: u32) -> Result<usize> {
    check_address(a, bits)?;
    Ok(rotr_unchecked(a, bits))
}

/// `out[rotl(a)] = x[a]`.
pub fn perfect_shuffle<X: Clone>(x: &[X]) -> Result<Vec<X>> {
    ShuffleSpec::for_length(x.len(), Direction::Forward)?
        .permutation()
        .apply(x)
}

/// `out[rotr(a)] = x[a]`.
pub fn inverse_shuffle<X: Clone>(x: &[X]) -> Result<Vec<X>> {
    ShuffleSpec::for_length(x.len(), Direction::Inverse)?
        .permutation()
        .apply(x)
}
