use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary labeling of an ordered sequence of text units.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LabelSequence(Vec<u8>);

impl LabelSequence {
    /// Fails if any entry is not 0 or 1.
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Contract(format!("label {bad} is not binary")));
        }
        Ok(LabelSequence(labels))
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(it: I) -> Self {
        LabelSequence(it.into_iter().map(u8::from).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&l| l == 1).count()
    }

    pub fn has_both(&self) -> bool {
        let ones = self.count_ones();
        ones > 0 && ones < self.len()
    }

    pub fn complement(&self) -> Self {
        LabelSequence(self.0.iter().map(|&l| 1 - l).collect())
    }

    /// Labels at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        LabelSequence(indices.iter().map(|&i| self.0[i]).collect())
    }

    /// Positions carrying `label`, ascending.
    pub fn positions(&self, label: u8) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

impl TryFrom<Vec<u8>> for LabelSequence {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        LabelSequence::new(v)
    }
}

impl From<LabelSequence> for Vec<u8> {
    fn from(l: LabelSequence) -> Self {
        l.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary() {
        assert!(LabelSequence::new(vec![0, 2]).is_err());
        assert!(serde_json::from_str::<LabelSequence>("[0,1,3]").is_err());
    }

    #[test]
    fn basic_queries() {
        let l = LabelSequence::new(vec![1, 0, 1, 1]).unwrap();
        assert_eq!(l.count_ones(), 3);
        assert!(l.has_both());
        assert_eq!(l.complement().as_slice(), &[0, 1, 0, 0]);
        assert_eq!(l.select(&[1, 3]).as_slice(), &[0, 1]);
        assert_eq!(l.positions(1), vec![0, 2, 3]);
    }
}
