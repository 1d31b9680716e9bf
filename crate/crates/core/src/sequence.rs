use crate::error::{GeoError, Result};
use crate::spd::SpdMatrix;

/// Ordered, nonempty list of SPD matrices of a common size.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdSequence(Vec<SpdMatrix>);

impl SpdSequence {
    pub fn new(items: Vec<SpdMatrix>) -> Result<Self> {
        let first = items.first().ok_or_else(|| GeoError::param("empty SPD sequence"))?;
        let n = first.dim();
        if let Some(bad) = items.iter().position(|m| m.dim() != n) {
            return Err(GeoError::dim(format!(
                "sequence element {bad} has size {}, expected {n}",
                items[bad].dim()
            )));
        }
        Ok(SpdSequence(items))
    }

    pub fn constant(m: SpdMatrix, len: usize) -> Result<Self> {
        Self::new(vec![m; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Matrix size `N`.
    pub fn dim(&self) -> usize {
        self.0[0].dim()
    }

    pub fn as_slice(&self) -> &[SpdMatrix] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SpdMatrix> {
        self.0.iter()
    }

    pub fn last(&self) -> &SpdMatrix {
        self.0.last().expect("nonempty")
    }

    pub fn into_vec(self) -> Vec<SpdMatrix> {
        self.0
    }
}

impl std::ops::Index<usize> for SpdSequence {
    type Output = SpdMatrix;

    fn index(&self, i: usize) -> &SpdMatrix {
        &self.0[i]
    }
}

impl<'a> IntoIterator for &'a SpdSequence {
    type Item = &'a SpdMatrix;
    type IntoIter = std::slice::Iter<'a, SpdMatrix>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A sequence with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub seq: SpdSequence,
    pub label: usize,
}
