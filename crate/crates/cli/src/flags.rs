//! Flag groups shared by several subcommands.

use std::path::PathBuf;

use clap::Args;

use crate::config::Layers;
use crate::{CliError, Ctx};

/// Manifold flags; each one overrides the matching `manifold` key.
#[derive(Args, Debug, Default)]
pub struct ManifoldFlags {
    /// Manifold configuration file; replaces the `manifold` section.
    #[arg(long, value_name = "FILE")]
    pub manifold: Option<PathBuf>,
    /// circle, sphere, torus or affine.
    #[arg(long)]
    pub kind: Option<String>,
    /// Intrinsic dimension d.
    #[arg(long)]
    pub d: Option<usize>,
    /// Ambient dimension D.
    #[arg(long = "ambient", value_name = "D")]
    pub ambient: Option<usize>,
    /// Tube fraction q ∈ [0, 1).
    #[arg(long)]
    pub q: Option<f64>,
    /// identity, random or balanced.
    #[arg(long)]
    pub frame: Option<String>,
    /// Radius, major radius or side length.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Minor over major radius of the torus.
    #[arg(long)]
    pub torus_ratio: Option<f64>,
    /// Seed of the random frame.
    #[arg(long)]
    pub manifold_seed: Option<u64>,
}

impl ManifoldFlags {
    pub fn apply(&self, ctx: &mut Ctx) -> Result<(), CliError> {
        let base = ctx.config_path.clone();
        let l: &mut Layers = &mut ctx.layers;
        l.inline_file("manifold", base.as_deref())?;
        if let Some(p) = &self.manifold {
            l.set("manifold", crate::config::read_json(p)?);
        }
        l.put("manifold.kind", self.kind.clone());
        l.put("manifold.d", self.d);
        l.put("manifold.D", self.ambient);
        l.put("manifold.q", self.q);
        l.put("manifold.placement.frame", self.frame.clone());
        l.put("manifold.placement.scale", self.scale);
        l.put("manifold.placement.torus_ratio", self.torus_ratio);
        l.put("manifold.seed", self.manifold_seed);
        Ok(())
    }
}

/// Target flags; each one overrides the matching `target` key.
#[derive(Args, Debug, Default)]
pub struct TargetFlags {
    /// Target family, e.g. abs_power, sine, lacunary or constant.
    #[arg(long = "target", value_name = "KIND")]
    pub target: Option<String>,
    /// Hölder exponent α ∈ (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Amplitude A of the target.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Seed of the Hölder-constant estimate.
    #[arg(long)]
    pub target_seed: Option<u64>,
}

impl TargetFlags {
    pub fn apply(&self, l: &mut Layers) {
        l.put("target.kind", self.target.clone());
        l.put("target.alpha", self.alpha);
        l.put("target.amplitude", self.amplitude);
        l.put("target.seed", self.target_seed);
    }
}
