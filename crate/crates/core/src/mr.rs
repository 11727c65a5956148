//! Metamorphic relations and metamorphic groups.
//!
//! A [`MetamorphicRelation`] bundles a transform kernel, the label relation
//! between source and follow-up, and an applicability predicate on the source
//! label. A [`MetamorphicGroup`] is one concrete instance: a source sample, its
//! follow-up and the exact parameter draw that produced it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::transforms::{self, GrayImage};

pub const NUM_CLASSES: usize = 10;

/// An image with its class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub image: GrayImage,
    pub label: u8,
}

impl LabeledSample {
    pub fn new(image: GrayImage, label: u8) -> Result<Self> {
        if usize::from(label) >= NUM_CLASSES {
            return Err(Error::Range(format!(
                "label {label} outside 0..{NUM_CLASSES}"
            )));
        }
        Ok(Self { image, label })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MrKind {
    Rotate,
    Shift,
    Scale,
    Vmirror,
    Elastic,
}

impl MrKind {
    pub const ALL: [MrKind; 5] = [
        MrKind::Rotate,
        MrKind::Shift,
        MrKind::Scale,
        MrKind::Vmirror,
        MrKind::Elastic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MrKind::Rotate => "rotate",
            MrKind::Shift => "shift",
            MrKind::Scale => "scale",
            MrKind::Vmirror => "vmirror",
            MrKind::Elastic => "elastic",
        }
    }
}

impl fmt::Display for MrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MrKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MrKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown relation `{s}`; valid names are rotate, shift, scale, vmirror, elastic"
                ))
            })
    }
}

/// Parameter distributions the relations draw from, one per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamSpec {
    /// Rotation angle range in degrees, uniform.
    pub rotate_deg: (f64, f64),
    /// Inclusive integer shift range, applied independently to dx and dy.
    pub shift_px: (i64, i64),
    /// Scale factor range, uniform.
    pub scale_factor: (f64, f64),
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
}

impl Default for ParamSpec {
    fn default() -> Self {
        Self {
            rotate_deg: (-15.0, 15.0),
            shift_px: (-3, 3),
            scale_factor: (0.85, 1.15),
            elastic_alpha: 8.0,
            elastic_sigma: 4.0,
        }
    }
}

impl ParamSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let (lo, hi) = self.rotate_deg;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("rotation range [{lo}, {hi}] is invalid"));
        }
        let (lo, hi) = self.shift_px;
        if lo > hi {
            return bad(format!("shift range [{lo}, {hi}] is invalid"));
        }
        let (lo, hi) = self.scale_factor;
        if !(lo > 0.0 && hi <= 4.0 && lo <= hi) {
            return bad(format!("scale range [{lo}, {hi}] must lie in (0, 4]"));
        }
        if !(self.elastic_alpha >= 0.0 && self.elastic_alpha.is_finite()) {
            return bad(format!("elastic alpha {} is invalid", self.elastic_alpha));
        }
        if !(self.elastic_sigma > 0.0 && self.elastic_sigma.is_finite()) {
            return bad(format!("elastic sigma {} is invalid", self.elastic_sigma));
        }
        Ok(())
    }
}

/// The concrete parameters one follow-up was generated with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamDraw {
    Rotate { angle_deg: f64 },
    Shift { dx: i64, dy: i64 },
    Scale { factor: f64 },
    Vmirror,
    Elastic { alpha: f64, sigma: f64, seed: u64 },
}

impl ParamDraw {
    pub fn kind(&self) -> MrKind {
        match self {
            ParamDraw::Rotate { .. } => MrKind::Rotate,
            ParamDraw::Shift { .. } => MrKind::Shift,
            ParamDraw::Scale { .. } => MrKind::Scale,
            ParamDraw::Vmirror => MrKind::Vmirror,
            ParamDraw::Elastic { .. } => MrKind::Elastic,
        }
    }

    /// Runs the transform kernel with these parameters.
    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match *self {
            ParamDraw::Rotate { angle_deg } => Ok(transforms::rotate(img, angle_deg)),
            ParamDraw::Shift { dx, dy } => Ok(transforms::shift(img, dx, dy)),
            ParamDraw::Scale { factor } => transforms::scale(img, factor),
            ParamDraw::Vmirror => Ok(transforms::vmirror(img)),
            ParamDraw::Elastic { alpha, sigma, seed } => {
                transforms::elastic(img, alpha, sigma, seed)
            }
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn identity_label(label: u8) -> u8 {
    label
}

fn any_label(_: u8) -> bool {
    true
}

fn mirror_symmetric_digit(label: u8) -> bool {
    matches!(label, 0 | 1 | 8)
}

#[derive(Clone, Debug)]
pub struct MetamorphicRelation {
    pub kind: MrKind,
    pub params: ParamSpec,
    pub label_relation: fn(u8) -> u8,
    pub applicability: fn(u8) -> bool,
}

impl MetamorphicRelation {
    /// One of the five shipped relations, using `params` for its draws.
    pub fn new(kind: MrKind, params: ParamSpec) -> Result<Self> {
        params.validate()?;
        let applicability = match kind {
            MrKind::Vmirror => mirror_symmetric_digit as fn(u8) -> bool,
            _ => any_label,
        };
        Ok(Self {
            kind,
            params,
            label_relation: identity_label,
            applicability,
        })
    }

    pub fn with_defaults(kind: MrKind) -> Self {
        Self::new(kind, ParamSpec::default()).expect("default parameters are valid")
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn is_applicable(&self, label: u8) -> bool {
        (self.applicability)(label)
    }

    /// True when some labels are rejected, so candidates must be filtered.
    pub fn is_restrictive(&self) -> bool {
        (0..NUM_CLASSES as u8).any(|l| !self.is_applicable(l))
    }

    pub fn draw_params(&self, rng: &mut impl Rng) -> ParamDraw {
        let p = &self.params;
        match self.kind {
            MrKind::Rotate => ParamDraw::Rotate {
                angle_deg: uniform(rng, p.rotate_deg),
            },
            MrKind::Shift => ParamDraw::Shift {
                dx: rng.gen_range(p.shift_px.0..=p.shift_px.1),
                dy: rng.gen_range(p.shift_px.0..=p.shift_px.1),
            },
            MrKind::Scale => ParamDraw::Scale {
                factor: uniform(rng, p.scale_factor),
            },
            MrKind::Vmirror => ParamDraw::Vmirror,
            MrKind::Elastic => ParamDraw::Elastic {
                alpha: p.elastic_alpha,
                sigma: p.elastic_sigma,
                seed: rng.gen(),
            },
        }
    }

    /// Builds the follow-up of `source` for an explicit parameter draw.
    pub fn followup_with(
        &self,
        source: &LabeledSample,
        draw: ParamDraw,
    ) -> Result<MetamorphicGroup> {
        if !self.is_applicable(source.label) {
            return Err(Error::Applicability {
                relation: self.name().to_string(),
                label: source.label,
            });
        }
        if draw.kind() != self.kind {
            return Err(Error::InvalidParameter(format!(
                "{} parameters given to relation {}",
                draw.kind(),
                self.kind
            )));
        }
        let image = draw.apply(&source.image)?;
        let followup = LabeledSample::new(image, (self.label_relation)(source.label))?;
        Ok(MetamorphicGroup {
            source: source.clone(),
            followup,
            relation: self.kind,
            param_draw: draw,
        })
    }

    /// Draws parameters from `rng_seed` and builds the follow-up of `source`.
    pub fn generate_followup(
        &self,
        source: &LabeledSample,
        rng_seed: u64,
    ) -> Result<MetamorphicGroup> {
        if !self.is_applicable(source.label) {
            return Err(Error::Applicability {
                relation: self.name().to_string(),
                label: source.label,
            });
        }
        let draw = self.draw_params(&mut seed::rng_from(rng_seed));
        self.followup_with(source, draw)
    }
}

/// A source sample, its follow-up and the draw that links them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetamorphicGroup {
    pub source: LabeledSample,
    pub followup: LabeledSample,
    pub relation: MrKind,
    pub param_draw: ParamDraw,
}

impl MetamorphicGroup {
    /// Recomputes the follow-up from the recorded draw and checks it matches.
    pub fn verify(&self, mr: &MetamorphicRelation) -> Result<bool> {
        if mr.kind != self.relation {
            return Ok(false);
        }
        let replay = mr.followup_with(&self.source, self.param_draw.clone())?;
        Ok(replay.followup == self.followup)
    }

    /// The two training samples an MG contributes: source first, then follow-up.
    pub fn expand(self) -> [LabeledSample; 2] {
        [self.source, self.followup]
    }
}

pub fn expand_group(mg: &MetamorphicGroup) -> [LabeledSample; 2] {
    mg.clone().expand()
}
