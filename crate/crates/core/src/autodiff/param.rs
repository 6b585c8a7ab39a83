use serde::{Deserialize, Serialize};

use super::{Graph, Scalar, Var};
use crate::error::{Error, Result};

/// A named `rows × cols` block inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Contiguous, gap-free sequence of blocks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> &mut Self {
        let offset = self.len();
        self.blocks.push(Block {
            name: name.into(),
            offset,
            rows,
            cols,
        });
        self
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Blocks must tile `0..len` in order.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for b in &self.blocks {
            if b.offset != next {
                return Err(Error::Data(format!(
                    "layout block `{}` starts at {} but previous ends at {}",
                    b.name, b.offset, next
                )));
            }
            next += b.len();
        }
        Ok(())
    }

    /// Records one graph slice per block, in layout order.
    pub fn bind<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Vec<Var> {
        self.blocks
            .iter()
            .map(|b| g.slice(theta, b.offset, b.rows, b.cols))
            .collect()
    }
}

/// Flat trainable parameters with their layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        let p = Self { values, layout };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.layout.len() != self.values.len() {
            return Err(Error::Data(format!(
                "layout covers {} values but vector has {}",
                self.layout.len(),
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("parameter vector contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.block(name).map(|b| &self.values[b.range()])
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            layout: self.layout.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_tiles_vector() {
        let mut l = Layout::new();
        l.push("w", 2, 3).push("b", 1, 3);
        assert_eq!(l.len(), 9);
        assert!(l.validate().is_ok());
        assert_eq!(l.block("b").unwrap().range(), 6..9);
        let p = ParamVector::new((0..9).map(f64::from).collect(), l.clone()).unwrap();
        assert_eq!(p.block("b").unwrap(), &[6.0, 7.0, 8.0]);
        assert!(ParamVector::new(vec![0.0; 8], l.clone()).is_err());
        assert!(ParamVector::new(vec![f64::NAN; 9], l).is_err());
    }
}
