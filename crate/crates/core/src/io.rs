//! On-disk profile format: `{"dim", "r_max", "n", "stretch", "values"}`.
//!
//! Node positions are implied by the grid layout, so a document rebuilds the
//! exact grid it was written from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Profile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub dim: usize,
    pub r_max: f64,
    pub n: usize,
    #[serde(default)]
    pub stretch: f64,
    pub values: Vec<f64>,
}

impl ProfileDocument {
    pub fn of(u: &Profile) -> Self {
        let s = u.grid().spec();
        Self { dim: s.dim, r_max: s.r_max, n: s.n, stretch: s.stretch, values: u.values().to_vec() }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { dim: self.dim, r_max: self.r_max, n: self.n, stretch: self.stretch }
    }

    pub fn into_profile(self) -> Result<Profile> {
        let grid = self.spec().build()?;
        if self.values.len() != self.n {
            return Err(Error::ShapeMismatch { expected: self.n, got: self.values.len() });
        }
        Profile::new(grid, self.values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;

    #[test]
    fn round_trip_is_exact() {
        let g = RadialGrid::with_stretch(4, 12.5, 300, 0.5).unwrap();
        let u = Profile::from_fn(&g, |r| (-r).exp() / 3.0);
        let text = ProfileDocument::of(&u).to_json().unwrap();
        let back = ProfileDocument::from_json(&text).unwrap().into_profile().unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.grid().nodes(), g.nodes());
    }

    #[test]
    fn stretch_defaults_to_zero_and_length_is_checked() {
        let doc = ProfileDocument::from_json(r#"{"dim":3,"r_max":10,"n":16,"values":[0,0]}"#).unwrap();
        assert_eq!(doc.stretch, 0.0);
        assert!(matches!(doc.into_profile(), Err(Error::ShapeMismatch { expected: 16, got: 2 })));
        assert!(matches!(ProfileDocument::from_json("{"), Err(Error::Json(_))));
    }
}
