use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub const NUM_PLANTS: usize = 5;
pub const MAX_LEAVES: u8 = 6;
/// Number of points in the integer grid {0..6}^5.
pub const GRID_SIZE: usize = 16_807;

/// Which of the two study variants a dataset, model or session belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Experiment {
    /// Growth depends on plants 2, 4 and 5.
    Exp1,
    /// Growth depends on plants 2 and 4.
    Exp2,
}

impl Experiment {
    pub fn number(self) -> u8 {
        match self {
            Experiment::Exp1 => 1,
            Experiment::Exp2 => 2,
        }
    }

    /// Canonical plant indices (1-based) that influence growth.
    pub fn relevant_plants(self) -> &'static [u8] {
        match self {
            Experiment::Exp1 => &[2, 4, 5],
            Experiment::Exp2 => &[2, 4],
        }
    }
}

impl TryFrom<u8> for Experiment {
    type Error = DataError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Experiment::Exp1),
            2 => Ok(Experiment::Exp2),
            other => Err(DataError::UnknownExperiment(other.to_string())),
        }
    }
}

impl From<Experiment> for u8 {
    fn from(e: Experiment) -> u8 {
        e.number()
    }
}

impl FromStr for Experiment {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "exp1" => Ok(Experiment::Exp1),
            "2" | "exp2" => Ok(Experiment::Exp2),
            _ => Err(DataError::UnknownExperiment(s.to_string())),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Leaf counts for the five plants, always in canonical plant order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct PlantVector([u8; NUM_PLANTS]);

impl PlantVector {
    pub fn new(leaves: [u8; NUM_PLANTS]) -> Result<Self, DataError> {
        for (index, &value) in leaves.iter().enumerate() {
            if value > MAX_LEAVES {
                return Err(DataError::LeafOutOfRange {
                    index,
                    value: value as i64,
                });
            }
        }
        Ok(PlantVector(leaves))
    }

    pub fn from_slice(values: &[i64]) -> Result<Self, DataError> {
        if values.len() != NUM_PLANTS {
            return Err(DataError::WrongArity(values.len()));
        }
        let mut leaves = [0u8; NUM_PLANTS];
        for (index, &value) in values.iter().enumerate() {
            if !(0..=MAX_LEAVES as i64).contains(&value) {
                return Err(DataError::LeafOutOfRange { index, value });
            }
            leaves[index] = value as u8;
        }
        Ok(PlantVector(leaves))
    }

    pub fn zeros() -> Self {
        PlantVector([0; NUM_PLANTS])
    }

    pub fn leaves(&self) -> [u8; NUM_PLANTS] {
        self.0
    }

    /// Leaf count of plant `plant` (1-based, as participants see it).
    pub fn plant(&self, plant: usize) -> u8 {
        self.0[plant - 1]
    }

    pub fn to_point(&self) -> [f64; NUM_PLANTS] {
        self.0.map(f64::from)
    }

    pub fn l1_distance(&self, other: &PlantVector) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
            .sum()
    }

    /// Every point of {0..6}^5 in lexicographic order.
    pub fn grid() -> impl Iterator<Item = PlantVector> {
        (0..GRID_SIZE).map(|mut code| {
            let mut leaves = [0u8; NUM_PLANTS];
            for slot in leaves.iter_mut().rev() {
                *slot = (code % 7) as u8;
                code /= 7;
            }
            PlantVector(leaves)
        })
    }
}

impl TryFrom<Vec<i64>> for PlantVector {
    type Error = DataError;

    fn try_from(values: Vec<i64>) -> Result<Self, Self::Error> {
        PlantVector::from_slice(&values)
    }
}

impl From<PlantVector> for Vec<i64> {
    fn from(p: PlantVector) -> Vec<i64> {
        p.0.iter().map(|&v| v as i64).collect()
    }
}

impl FromStr for PlantVector {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<i64>()
                    .map_err(|_| DataError::InvalidParameter(format!("not an integer: `{part}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PlantVector::from_slice(&values)
    }
}

impl fmt::Display for PlantVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}]",
            self.0
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_lexicographic_and_complete() {
        let grid: Vec<_> = PlantVector::grid().collect();
        assert_eq!(grid.len(), GRID_SIZE);
        assert_eq!(grid[0], PlantVector::zeros());
        assert_eq!(grid[1].leaves(), [0, 0, 0, 0, 1]);
        assert_eq!(grid[GRID_SIZE - 1].leaves(), [6; 5]);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(PlantVector::new([0, 0, 7, 0, 0]).is_err());
        assert!(PlantVector::from_slice(&[0, 0, -1, 0, 0]).is_err());
        assert!(PlantVector::from_slice(&[0, 0, 0]).is_err());
        assert!("0,1,2,3".parse::<PlantVector>().is_err());
        assert_eq!(
            "0, 5,0,1,0".parse::<PlantVector>().unwrap().leaves(),
            [0, 5, 0, 1, 0]
        );
    }

    #[test]
    fn json_is_a_plain_array() {
        let p = PlantVector::new([1, 2, 3, 4, 5]).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1,2,3,4,5]");
        assert!(serde_json::from_str::<PlantVector>("[1,2,3,4,9]").is_err());
        assert_eq!(serde_json::to_string(&Experiment::Exp2).unwrap(), "2");
    }
}
