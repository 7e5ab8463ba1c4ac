use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::netmodel::{ClusterId, Instance};

/// Colors are `1..=Δ+1`.
pub type Color = u32;

/// Map from clusters to colors, with the stage that set each color.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialColoring {
    colors: Vec<Option<Color>>,
    provenance: Vec<Option<&'static str>>,
}

impl PartialColoring {
    pub fn new(num_clusters: usize) -> Self {
        Self { colors: vec![None; num_clusters], provenance: vec![None; num_clusters] }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    #[inline]
    pub fn get(&self, v: usize) -> Option<Color> {
        self.colors[v]
    }

    #[inline]
    pub fn is_colored(&self, v: usize) -> bool {
        self.colors[v].is_some()
    }

    pub fn set(&mut self, v: usize, c: Color, stage: &'static str) {
        self.colors[v] = Some(c);
        self.provenance[v] = Some(stage);
    }

    pub fn clear(&mut self, v: usize) {
        self.colors[v] = None;
        self.provenance[v] = None;
    }

    pub fn provenance(&self, v: usize) -> Option<&'static str> {
        self.provenance[v]
    }

    pub fn colors(&self) -> &[Option<Color>] {
        &self.colors
    }

    pub fn colored_count(&self) -> usize {
        self.colors.iter().filter(|c| c.is_some()).count()
    }

    pub fn uncolored(&self) -> impl Iterator<Item = usize> + '_ {
        self.colors.iter().enumerate().filter(|(_, c)| c.is_none()).map(|(v, _)| v)
    }

    /// `other` agrees with `self` wherever `self` is colored.
    pub fn is_extended_by(&self, other: &Self) -> bool {
        self.colors.iter().zip(&other.colors).all(|(a, b)| a.is_none() || a == b)
    }

    /// Number of neighbors of `v` that hold a color.
    pub fn colored_degree(&self, inst: &Instance, v: usize) -> usize {
        inst.neighbors(v).iter().filter(|&&u| self.is_colored(u)).count()
    }

    pub fn uncolored_degree(&self, inst: &Instance, v: usize) -> usize {
        inst.degree(v) - self.colored_degree(inst, v)
    }

    /// Free-color bitmap of `v`: entry `c` is true when no neighbor holds color `c`.
    pub fn palette(&self, inst: &Instance, v: usize) -> Vec<bool> {
        let q = inst.delta() + 1;
        let mut free = vec![true; q + 1];
        free[0] = false;
        for &u in inst.neighbors(v) {
            if let Some(c) = self.colors[u] {
                free[c as usize] = false;
            }
        }
        free
    }

    pub fn to_export(&self, inst: &Instance) -> ColoringExport {
        ColoringExport {
            colors: (0..self.len()).filter_map(|v| Some((inst.cluster_id(v), self.colors[v]?))).collect(),
        }
    }

    pub fn from_export(inst: &Instance, export: &ColoringExport) -> crate::Result<Self> {
        let mut out = Self::new(inst.num_clusters());
        for (&id, &c) in &export.colors {
            let v = inst
                .cluster_index(id)
                .ok_or_else(|| crate::Error::Validation(format!("coloring names unknown cluster {id}")))?;
            out.set(v, c, "input");
        }
        Ok(out)
    }
}

/// `coloring.json`: cluster id → color.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColoringExport {
    pub colors: BTreeMap<ClusterId, Color>,
}
