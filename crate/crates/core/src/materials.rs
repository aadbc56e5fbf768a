//! Per-material reflection/scattering loss tables.
//!
//! Loss is tabulated on a (frequency, incidence-angle) grid with a 5 degree
//! angle step and looked up with bilinear interpolation. The built-in tables
//! are synthetic: the measured data behind the vehicle-body materials is not
//! published, so the defaults encode the known qualitative ordering (metal
//! reflects best, then glass, then plastic) with a mild angle dependence.
//! Real tables can be loaded from CSV via [`MaterialRegistry::load_csv`].

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Angle grid step used by the default tables, degrees.
pub const ANGLE_STEP_DEG: f64 = 5.0;

/// Loss table for one material.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialProfile {
    pub name: String,
    /// Frequency grid, GHz, strictly increasing.
    pub freqs_ghz: Vec<f64>,
    /// Incidence grid, degrees from the surface normal, strictly increasing,
    /// covering [0, 90).
    pub angles_deg: Vec<f64>,
    /// loss_db[f][a] >= 0, specular reflection loss at grid node (f, a).
    pub loss_db: Vec<Vec<f64>>,
    /// Off-specular rolloff exponent; larger means sharper (more mirror-like).
    pub spread: f64,
}

impl MaterialProfile {
    /// Bilinear interpolation on the grid; queries outside the grid clamp to
    /// the nearest edge. Exact grid nodes return the stored value.
    pub fn loss_at(&self, freq_ghz: f64, incidence_deg: f64) -> f64 {
        let (fi, ft) = bracket(&self.freqs_ghz, freq_ghz);
        let (ai, at) = bracket(&self.angles_deg, incidence_deg);
        let f0 = &self.loss_db[fi];
        let f1 = &self.loss_db[(fi + 1).min(self.freqs_ghz.len() - 1)];
        let lo = f0[ai] * (1.0 - at) + f0[(ai + 1).min(self.angles_deg.len() - 1)] * at;
        let hi = f1[ai] * (1.0 - at) + f1[(ai + 1).min(self.angles_deg.len() - 1)] * at;
        lo * (1.0 - ft) + hi * ft
    }
}

/// Returns the lower bracketing index and the interpolation weight in [0,1].
fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
    if v <= grid[0] {
        return (0, 0.0);
    }
    if v >= *grid.last().unwrap() {
        return (grid.len() - 1, 0.0);
    }
    let mut i = 0;
    while grid[i + 1] < v {
        i += 1;
    }
    let t = (v - grid[i]) / (grid[i + 1] - grid[i]);
    (i, t)
}

/// Compact handle into a [`MaterialRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaterialId(pub u16);

#[derive(Debug, Clone, Default)]
pub struct MaterialRegistry {
    profiles: Vec<MaterialProfile>,
    by_name: BTreeMap<String, MaterialId>,
}

impl MaterialRegistry {
    pub fn insert(&mut self, profile: MaterialProfile) -> MaterialId {
        if let Some(&id) = self.by_name.get(&profile.name) {
            self.profiles[id.0 as usize] = profile;
            return id;
        }
        let id = MaterialId(self.profiles.len() as u16);
        self.by_name.insert(profile.name.clone(), id);
        self.profiles.push(profile);
        id
    }

    pub fn lookup(&self, name: &str) -> Result<MaterialId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| SimError::Material(format!("unknown material `{name}`")))
    }

    pub fn profile(&self, id: MaterialId) -> &MaterialProfile {
        &self.profiles[id.0 as usize]
    }

    pub fn reflection_loss_db(&self, id: MaterialId, freq_ghz: f64, incidence_deg: f64) -> f64 {
        self.profile(id).loss_at(freq_ghz, incidence_deg)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(|s| s.as_str())
    }

    /// Registry with the built-in synthetic tables for the vehicle-body and
    /// street materials at the 79/150/300 GHz presets.
    pub fn with_defaults() -> Self {
        let mut reg = MaterialRegistry::default();
        // (name, loss at [79, 150, 300] GHz before angle shaping, spread)
        let specs: [(&str, [f64; 3], f64); 6] = [
            ("aluminum", [1.6, 1.8, 2.0], 200.0),
            ("steel", [1.6, 1.8, 2.0], 180.0),
            ("glass", [4.5, 6.0, 8.0], 120.0),
            ("plastic", [7.0, 10.0, 14.0], 40.0),
            ("concrete", [6.0, 8.0, 10.0], 60.0),
            ("asphalt", [8.0, 10.0, 13.0], 50.0),
        ];
        for (name, base, spread) in specs {
            reg.insert(synthetic_profile(name, &[79.0, 150.0, 300.0], &base, spread));
        }
        reg
    }

    /// Load material tables from CSV with header
    /// `material,freq_ghz,incidence_deg,loss_db,spread`, one row per grid
    /// node. Every material must cover the full cartesian grid of its
    /// frequencies and angles.
    pub fn load_csv(&mut self, path: &Path) -> Result<Vec<MaterialId>> {
        let text = std::fs::read_to_string(path)?;
        self.load_csv_str(&text)
    }

    pub fn load_csv_str(&mut self, text: &str) -> Result<Vec<MaterialId>> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| SimError::Material("empty material CSV".into()))?;
        let expected = "material,freq_ghz,incidence_deg,loss_db,spread";
        if header.trim() != expected {
            return Err(SimError::Material(format!(
                "bad CSV header `{}`, expected `{expected}`",
                header.trim()
            )));
        }
        // material -> (spread, map (freq, angle) -> loss)
        type Key = (u64, u64);
        let mut tables: BTreeMap<String, (f64, BTreeMap<Key, f64>)> = BTreeMap::new();
        for (ln, line) in lines {
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 5 {
                return Err(SimError::Material(format!(
                    "line {}: expected 5 columns, got {}",
                    ln + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    SimError::Material(format!("line {}: bad {what} `{s}`", ln + 1))
                })
            };
            let freq = parse(cols[1], "freq_ghz")?;
            let angle = parse(cols[2], "incidence_deg")?;
            let loss = parse(cols[3], "loss_db")?;
            let spread = parse(cols[4], "spread")?;
            if loss < 0.0 {
                return Err(SimError::Material(format!("line {}: loss_db < 0", ln + 1)));
            }
            if !(0.0..90.0).contains(&angle) {
                return Err(SimError::Material(format!(
                    "line {}: incidence_deg {} outside [0, 90)",
                    ln + 1,
                    angle
                )));
            }
            let entry = tables
                .entry(cols[0].trim().to_string())
                .or_insert_with(|| (spread, BTreeMap::new()));
            if (entry.0 - spread).abs() > 1e-12 {
                return Err(SimError::Material(format!(
                    "line {}: inconsistent spread for material `{}`",
                    ln + 1,
                    cols[0]
                )));
            }
            if entry.1.insert((freq.to_bits(), angle.to_bits()), loss).is_some() {
                return Err(SimError::Material(format!(
                    "line {}: duplicate grid node ({freq}, {angle})",
                    ln + 1
                )));
            }
        }
        let mut ids = Vec::new();
        for (name, (spread, nodes)) in tables {
            let mut freqs: Vec<f64> = nodes.keys().map(|k| f64::from_bits(k.0)).collect();
            let mut angles: Vec<f64> = nodes.keys().map(|k| f64::from_bits(k.1)).collect();
            freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            freqs.dedup();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            angles.dedup();
            let mut loss = vec![vec![0.0; angles.len()]; freqs.len()];
            for (fi, f) in freqs.iter().enumerate() {
                for (ai, a) in angles.iter().enumerate() {
                    match nodes.get(&(f.to_bits(), a.to_bits())) {
                        Some(&v) => loss[fi][ai] = v,
                        None => {
                            return Err(SimError::Material(format!(
                                "material `{name}`: missing grid node ({f} GHz, {a} deg)"
                            )))
                        }
                    }
                }
            }
            ids.push(self.insert(MaterialProfile {
                name,
                freqs_ghz: freqs,
                angles_deg: angles,
                loss_db: loss,
                spread,
            }));
        }
        Ok(ids)
    }
}

/// Synthetic table: per-frequency base loss shaped by a mild decrease toward
/// grazing incidence, matching the usual |reflection coefficient| -> 1 trend.
fn synthetic_profile(name: &str, freqs: &[f64], base: &[f64], spread: f64) -> MaterialProfile {
    let angles: Vec<f64> = (0..18).map(|i| i as f64 * ANGLE_STEP_DEG).collect();
    let loss = base
        .iter()
        .map(|b| {
            angles
                .iter()
                .map(|a| b * (1.0 - 0.4 * (a / 90.0).powi(2)))
                .collect()
        })
        .collect();
    MaterialProfile {
        name: name.to_string(),
        freqs_ghz: freqs.to_vec(),
        angles_deg: angles,
        loss_db: loss,
        spread,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_node_returns_stored_value() {
        let reg = MaterialRegistry::with_defaults();
        let id = reg.lookup("glass").unwrap();
        let p = reg.profile(id);
        // node (300 GHz, 50 deg)
        let stored = p.loss_db[2][10];
        assert_eq!(p.loss_at(300.0, 50.0), stored);
    }

    #[test]
    fn metal_beats_dielectrics_at_300ghz() {
        let reg = MaterialRegistry::with_defaults();
        let al = reg.reflection_loss_db(reg.lookup("aluminum").unwrap(), 300.0, 50.0);
        let steel = reg.reflection_loss_db(reg.lookup("steel").unwrap(), 300.0, 50.0);
        let glass = reg.reflection_loss_db(reg.lookup("glass").unwrap(), 300.0, 50.0);
        let plastic = reg.reflection_loss_db(reg.lookup("plastic").unwrap(), 300.0, 50.0);
        assert!(al >= 0.0 && al <= 5.0, "aluminum at 50 deg: {al}");
        assert!(steel <= 5.0);
        assert!(glass > al);
        assert!(plastic > glass);
    }

    #[test]
    fn interpolation_is_monotone_between_nodes() {
        let reg = MaterialRegistry::with_defaults();
        let id = reg.lookup("plastic").unwrap();
        let p = reg.profile(id);
        let lo = p.loss_at(300.0, 50.0);
        let mid = p.loss_at(300.0, 52.5);
        let hi = p.loss_at(300.0, 55.0);
        assert!((lo >= mid && mid >= hi) || (lo <= mid && mid <= hi));
        assert!((mid - (lo + hi) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_material_is_an_error() {
        let reg = MaterialRegistry::with_defaults();
        assert!(reg.lookup("adamantium").is_err());
    }

    #[test]
    fn csv_roundtrip_and_validation() {
        let mut reg = MaterialRegistry::default();
        let csv = "material,freq_ghz,incidence_deg,loss_db,spread\n\
                   chrome,100,0,1.0,150\n\
                   chrome,100,45,0.8,150\n\
                   chrome,200,0,1.2,150\n\
                   chrome,200,45,1.0,150\n";
        let ids = reg.load_csv_str(csv).unwrap();
        assert_eq!(ids.len(), 1);
        let p = reg.profile(ids[0]);
        assert_eq!(p.loss_at(100.0, 45.0), 0.8);
        assert_eq!(p.loss_at(150.0, 0.0), 1.1);

        let missing = "material,freq_ghz,incidence_deg,loss_db,spread\n\
                       chrome,100,0,1.0,150\n\
                       chrome,200,45,1.0,150\n";
        assert!(MaterialRegistry::default().load_csv_str(missing).is_err());

        let negative = "material,freq_ghz,incidence_deg,loss_db,spread\n\
                        chrome,100,0,-1.0,150\n";
        assert!(MaterialRegistry::default().load_csv_str(negative).is_err());
    }
}
