//! Reverse-mode gradients of the whole tiled pipeline against central
//! finite differences.
//!
//! `cargo run --example gradient_check`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holotile::autodiff::gradcheck::check_params;
use holotile::autodiff::{ParamStore, Tape};
use holotile::nnets::{BackboneConfig, LfmnConfig};
use holotile::optimize::{build_pipeline, Optics, PipelineConfig, PipelineParams};
use holotile::{fixtures, Result};

fn main() -> Result<()> {
    let mut cfg = PipelineConfig {
        backbone: BackboneConfig { widths: vec![4, 8] },
        lfmn: LfmnConfig {
            features: 4,
            blocks: 1,
            ..LfmnConfig::default()
        },
        ..PipelineConfig::default()
    };
    cfg.optical.distance = 1e-3;
    let mut params = PipelineParams::init(&cfg, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids: Vec<_> = params.store.ids().collect();
    for id in ids {
        params.store.get_mut(id).mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    }
    let image = fixtures::image(3, 16, 16);
    let optics = Optics::new(&cfg, 16, 16)?;
    let build = |t: &mut Tape, s: &ParamStore| {
        let q = PipelineParams {
            store: s.clone(),
            ..params.clone()
        };
        Ok(build_pipeline(t, &image, &q, &cfg, &optics)?.loss)
    };
    let r = check_params(&params.store, 4, 1e-6, build)?;
    println!(
        "{} tensors, {} finite-difference evaluations, relative error {:.2e}",
        params.store.len(),
        r.evaluations,
        r.rel_error
    );
    Ok(())
}
