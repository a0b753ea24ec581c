//! Per-category symmetry description and the editable category table.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Symmetry;

/// Class id reserved for distractor objects.
pub const DISTRACTOR_CLASS_ID: u32 = 255;

/// Largest number of discrete ground-truth rotations per category.
pub const MAX_THETA: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionalRule {
    #[default]
    None,
    /// Symmetric only while the handle is not visible.
    MugHandle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub class_id: u32,
    pub name: String,
    /// Unit axis in the NOCS frame.
    pub symmetry_axis: [f64; 3],
    /// Rotation angles about the axis, degrees; always contains 0.
    pub theta_set: Vec<f64>,
    #[serde(default)]
    pub conditional_rule: ConditionalRule,
    /// Range of the metric bbox diagonal (uniform scale) used for placement.
    #[serde(default = "default_scale_range")]
    pub scale_range: [f64; 2],
    /// Category-mean NOCS extents used as a size prior when fitting.
    #[serde(default)]
    pub nocs_extents: Option<[f64; 3]>,
}

fn default_scale_range() -> [f64; 2] {
    [0.15, 0.3]
}

impl CategorySpec {
    pub fn new(
        class_id: u32,
        name: &str,
        symmetry_axis: Vector3<f64>,
        theta_set: Vec<f64>,
        conditional_rule: ConditionalRule,
    ) -> Result<Self> {
        let spec = CategorySpec {
            class_id,
            name: name.to_string(),
            symmetry_axis: symmetry_axis.into(),
            theta_set,
            conditional_rule,
            scale_range: default_scale_range(),
            nocs_extents: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let axis = self.axis();
        if (axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "category {}: symmetry axis must be unit length",
                self.name
            )));
        }
        if self.theta_set.is_empty() || self.theta_set.len() > MAX_THETA {
            return Err(Error::invalid(format!(
                "category {}: theta set needs 1..={MAX_THETA} angles",
                self.name
            )));
        }
        if !self.theta_set.contains(&0.0) {
            return Err(Error::invalid(format!(
                "category {}: theta set must contain 0",
                self.name
            )));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid(format!(
                "category {}: bad scale range",
                self.name
            )));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vector3<f64> {
        Vector3::from(self.symmetry_axis)
    }

    fn inherently_symmetric(&self) -> bool {
        self.theta_set.len() > 1
    }

    /// Whether the category counts as axially symmetric for this instance.
    /// An unknown handle state is treated as visible.
    pub fn is_symmetric(&self, handle_visible: Option<bool>) -> bool {
        match self.conditional_rule {
            ConditionalRule::None => self.inherently_symmetric(),
            ConditionalRule::MugHandle => {
                handle_visible == Some(false) && self.inherently_symmetric()
            }
        }
    }

    pub fn symmetry(&self, handle_visible: Option<bool>) -> Symmetry {
        if self.is_symmetric(handle_visible) {
            Symmetry::Axial(self.axis())
        } else {
            Symmetry::None
        }
    }

    /// Angles used by the symmetric loss for this instance.
    pub fn effective_theta(&self, handle_visible: Option<bool>) -> Vec<f64> {
        if self.is_symmetric(handle_visible) {
            self.theta_set.clone()
        } else {
            vec![0.0]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    pub categories: Vec<CategorySpec>,
}

impl CategoryTable {
    pub fn new(categories: Vec<CategorySpec>) -> Result<Self> {
        for (i, c) in categories.iter().enumerate() {
            c.validate()?;
            if categories[..i].iter().any(|o| o.class_id == c.class_id) {
                return Err(Error::invalid(format!("duplicate class id {}", c.class_id)));
            }
        }
        Ok(CategoryTable { categories })
    }

    pub fn get(&self, class_id: u32) -> Option<&CategorySpec> {
        self.categories.iter().find(|c| c.class_id == class_id)
    }

    pub fn by_name(&self, name: &str) -> Option<&CategorySpec> {
        self.categories.iter().find(|c| c.name == name)
    }

    /// Symmetry for an instance; unknown classes are treated as asymmetric.
    pub fn symmetry(&self, class_id: u32, handle_visible: Option<bool>) -> Symmetry {
        self.get(class_id)
            .map(|c| c.symmetry(handle_visible))
            .unwrap_or(Symmetry::None)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table: CategoryTable = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        CategoryTable::new(table.categories)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("category table serializes")
    }

    /// The six tabletop categories with vertical (+y) symmetry axes.
    pub fn default_table() -> Self {
        let sym: Vec<f64> = (0..MAX_THETA).map(|i| i as f64 * 30.0).collect();
        let entries: [(u32, &str, bool, ConditionalRule, [f64; 2]); 6] = [
            (1, "bottle", true, ConditionalRule::None, [0.20, 0.40]),
            (2, "bowl", true, ConditionalRule::None, [0.15, 0.30]),
            (3, "camera", false, ConditionalRule::None, [0.12, 0.25]),
            (4, "can", true, ConditionalRule::None, [0.12, 0.22]),
            (5, "laptop", false, ConditionalRule::None, [0.35, 0.55]),
            (6, "mug", true, ConditionalRule::MugHandle, [0.12, 0.20]),
        ];
        let categories = entries
            .iter()
            .map(|&(id, name, symmetric, rule, range)| CategorySpec {
                class_id: id,
                name: name.to_string(),
                symmetry_axis: [0.0, 1.0, 0.0],
                theta_set: if symmetric { sym.clone() } else { vec![0.0] },
                conditional_rule: rule,
                scale_range: range,
                nocs_extents: crate::compositor::shapes::nominal_extents(name).map(Into::into),
            })
            .collect();
        CategoryTable::new(categories).expect("default table is valid")
    }
}
