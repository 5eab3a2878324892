use crate::error::{Error, Result};

/// A validated bijection on `0..n`, read as "element at `a` moves to `self[a]`".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(Error::invalid("permutation must be non-empty"));
        }
        let mut seen = vec![false; n];
        for (a, &to) in map.iter().enumerate() {
            if to >= n {
                return Err(Error::invalid(format!("permutation maps {a} to {to}, outside 0..{n}")));
            }
            if std::mem::replace(&mut seen[to], true) {
                return Err(Error::invalid(format!("permutation is not injective: {to} hit twice")));
            }
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (a, &to) in self.0.iter().enumerate() {
            inv[to] = a;
        }
        Self(inv)
    }

    /// Moves `items[a]` to position `self[a]`.
    pub fn apply<X: Clone>(&self, items: &[X]) -> Result<Vec<X>> {
        if items.len() != self.len() {
            return Err(Error::dim(format!(
                "cannot apply a permutation of size {} to {} items",
                self.len(),
                items.len()
            )));
        }
        let mut out: Vec<Option<X>> = vec![None; items.len()];
        for (a, item) in items.iter().enumerate() {
            out[self.0[a]] = Some(item.clone());
        }
        Ok(out.into_iter().map(|x| x.expect("bijection")).collect())
    }
}
