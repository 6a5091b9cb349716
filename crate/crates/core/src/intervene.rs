// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test-time additive steering.
//!
//! At every configured layer, vision positions move by `a · v` and text
//! positions (and, optionally, generated ones) by `b · vt + c · t`, where
//! `v`, `t`, `vt` are the unit directions stored in a [`DirectionSet`].

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nde::{DirectionSet, Family};
use crate::tensor::norm;
use crate::vlm::{Role, ToyVlm};

/// Layers an intervention touches. Serialized as `"all"` or a list of indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LayerSelection {
    /// Every block output, `1..=n_layers`.
    #[default]
    All,
    List(Vec<usize>),
}

impl LayerSelection {
    pub fn contains(&self, layer: usize) -> bool {
        match self {
            LayerSelection::All => layer >= 1,
            LayerSelection::List(l) => l.contains(&layer),
        }
    }

    pub fn resolve(&self, n_layers: usize) -> Vec<usize> {
        match self {
            LayerSelection::All => (1..=n_layers).collect(),
            LayerSelection::List(l) => {
                let mut l = l.clone();
                l.sort_unstable();
                l.dedup();
                l
            }
        }
    }
}

impl std::str::FromStr for LayerSelection {
    type Err = Error;

    /// `all` or a comma-separated list such as `1,2,4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(LayerSelection::All);
        }
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad layer index {p:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(LayerSelection::List)
    }
}

impl Serialize for LayerSelection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LayerSelection::All => s.serialize_str("all"),
            LayerSelection::List(l) => l.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for LayerSelection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            List(Vec<usize>),
        }
        match Repr::deserialize(d)? {
            Repr::Name(n) if n == "all" => Ok(LayerSelection::All),
            Repr::Name(n) => Err(serde::de::Error::custom(format!(
                "layers must be \"all\" or a list, got {n:?}"
            ))),
            Repr::List(l) => Ok(LayerSelection::List(l)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionConfig {
    pub a: f32,
    pub b: f32,
    pub c: f32,
    pub layers: LayerSelection,
    pub apply_to_generated: bool,
    pub strict_digest: bool,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            a: 0.9,
            b: 0.9,
            c: 0.9,
            layers: LayerSelection::All,
            apply_to_generated: true,
            strict_digest: false,
        }
    }
}

impl InterventionConfig {
    pub fn null() -> Self {
        Self { a: 0.0, b: 0.0, c: 0.0, ..Default::default() }
    }
}

static WARNED_MISSING: [AtomicBool; 3] = [
    AtomicBool::new(false),
    AtomicBool::new(false),
    AtomicBool::new(false),
];

fn warn_missing(family: Family, layer: usize) {
    let slot = match family {
        Family::Vision => 0,
        Family::Text => 1,
        Family::CrossModal => 2,
    };
    if !WARNED_MISSING[slot].swap(true, Ordering::Relaxed) {
        log::warn!("no {family} direction for layer {layer}; treating it as zero");
    }
}

fn add_scaled(hidden: &mut [f32], coeff: f32, direction: &[f32]) -> Result<()> {
    if direction.len() != hidden.len() {
        return Err(Error::Shape(format!(
            "direction of dim {} for hidden state of dim {}",
            direction.len(),
            hidden.len()
        )));
    }
    for (h, &d) in hidden.iter_mut().zip(direction) {
        *h += coeff * d;
    }
    Ok(())
}

/// Edits one hidden state in place. Zero coefficients are skipped entirely,
/// so a null configuration leaves the state bitwise unchanged.
pub fn apply_in_place(
    hidden: &mut [f32],
    role: Role,
    layer: usize,
    ds: &DirectionSet,
    cfg: &InterventionConfig,
) -> Result<()> {
    if !cfg.layers.contains(layer) {
        return Ok(());
    }
    let terms: &[(f32, Family)] = match role {
        Role::Vision => &[(cfg.a, Family::Vision)],
        Role::Generated if !cfg.apply_to_generated => &[],
        Role::Text | Role::Generated => &[(cfg.b, Family::CrossModal), (cfg.c, Family::Text)],
    };
    for &(coeff, family) in terms {
        if coeff == 0.0 {
            continue;
        }
        match ds.direction(layer, family) {
            Some(dir) => add_scaled(hidden, coeff, dir)?,
            None => warn_missing(family, layer),
        }
    }
    Ok(())
}

/// Pure form of [`apply_in_place`].
pub fn apply_intervention(
    hidden: &[f32],
    role: Role,
    layer: usize,
    ds: &DirectionSet,
    cfg: &InterventionConfig,
) -> Result<Vec<f32>> {
    let mut out = hidden.to_vec();
    apply_in_place(&mut out, role, layer, ds, cfg)?;
    Ok(out)
}

/// A direction set paired with its configuration, ready to hand to
/// [`ToyVlm::forward`].
#[derive(Debug, Clone, Copy)]
pub struct Intervention<'a> {
    pub directions: &'a DirectionSet,
    pub config: &'a InterventionConfig,
}

impl<'a> Intervention<'a> {
    pub fn new(directions: &'a DirectionSet, config: &'a InterventionConfig) -> Self {
        Self { directions, config }
    }

    /// Like [`Intervention::new`] but first runs [`validate_config`] against
    /// `model`; any error-level issue aborts, warnings are logged.
    pub fn checked(
        directions: &'a DirectionSet,
        config: &'a InterventionConfig,
        model: &ToyVlm,
    ) -> Result<Self> {
        let report = validate_config(config, directions, model);
        for issue in &report.issues {
            match issue.severity {
                Severity::Warning => log::warn!("{}: {}", issue.code, issue.message),
                Severity::Error => {
                    if issue.code == "digest_mismatch" {
                        return Err(Error::DigestMismatch {
                            expected: directions.meta.model_digest.clone(),
                            found: model.digest(),
                        });
                    }
                    return Err(Error::Config(format!("{}: {}", issue.code, issue.message)));
                }
            }
        }
        Ok(Self::new(directions, config))
    }

    pub fn touches_layer(&self, layer: usize) -> bool {
        self.config.layers.contains(layer)
    }

    pub fn apply_in_place(&self, hidden: &mut [f32], role: Role, layer: usize) -> Result<()> {
        apply_in_place(hidden, role, layer, self.directions, self.config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    fn push(&mut self, severity: Severity, code: &str, message: String) {
        self.issues.push(Issue {
            severity,
            code: code.to_string(),
            message,
        });
    }
}

/// Checks layer coverage, digest agreement and direction norms without
/// touching anything.
pub fn validate_config(cfg: &InterventionConfig, ds: &DirectionSet, model: &ToyVlm) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n_layers = model.config().n_layers;
    let d_model = model.config().d_model;

    for (name, v) in [("a", cfg.a), ("b", cfg.b), ("c", cfg.c)] {
        if !v.is_finite() {
            report.push(Severity::Error, "non_finite_coefficient", format!("{name} = {v}"));
        }
    }

    let layers = cfg.layers.resolve(n_layers);
    for &layer in &layers {
        if layer > n_layers || (layer == 0 && !ds.layers.contains_key(&0)) {
            report.push(
                Severity::Error,
                "layer_out_of_range",
                format!("layer {layer} outside 1..={n_layers}"),
            );
            continue;
        }
        for (coeff, family) in [(cfg.a, Family::Vision), (cfg.b, Family::CrossModal), (cfg.c, Family::Text)] {
            if coeff != 0.0 && ds.direction(layer, family).is_none() {
                report.push(
                    Severity::Warning,
                    "missing_direction",
                    format!("layer {layer} has no {family} direction; edit treated as zero"),
                );
            }
        }
    }

    let digest = model.digest();
    if ds.meta.model_digest != digest {
        let severity = if cfg.strict_digest { Severity::Error } else { Severity::Warning };
        report.push(
            severity,
            "digest_mismatch",
            format!(
                "directions were estimated on {}, model is {digest}",
                if ds.meta.model_digest.is_empty() { "<unknown>" } else { &ds.meta.model_digest }
            ),
        );
    }

    for (&layer, dirs) in &ds.layers {
        for family in Family::ALL {
            if let Some(dir) = dirs.get(family) {
                if dir.len() != d_model {
                    report.push(
                        Severity::Error,
                        "dimension_mismatch",
                        format!("layer {layer} {family}: dim {} vs d_model {d_model}", dir.len()),
                    );
                } else if (norm(dir) - 1.0).abs() > 1e-6 {
                    report.push(
                        Severity::Error,
                        "not_unit_norm",
                        format!("layer {layer} {family}: norm {}", norm(dir)),
                    );
                }
            }
        }
    }
    report
}
