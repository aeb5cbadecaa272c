//! The merge network on its own: parameter counts, the zero-weight
//! degeneracy to a plain pixel shuffle, and the r = 4 pyramid.
//!
//! `cargo run --example merge_network`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holotile::autodiff::{ParamStore, Tape, Tensor};
use holotile::nnets::{lfmn_forward, pyramid_merge, LfmnConfig, LfmnParams, PyramidParams};
use holotile::Result;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cfg = LfmnConfig {
        scale: 2,
        ..LfmnConfig::default()
    };
    let lfmn = LfmnParams::register(&mut store, "lfmn", &cfg, &mut rng)?;
    println!(
        "LFMN r=2, C={}, B={}: {} weights in {} tensors",
        cfg.features,
        cfg.blocks,
        store.scalar_count(),
        store.len()
    );

    let tiles = Tensor::from_shape_simple_fn((1, 4, 32, 32), || rng.gen_range(-3.0..3.0));
    let mut tape = Tape::new();
    let x = tape.constant(tiles.clone());
    let merged = lfmn_forward(&mut tape, &store, &lfmn, x)?;
    let shuffled = tape.pixel_shuffle(x, 2)?;
    let diff = (tape.value(merged) - tape.value(shuffled)).mapv(f64::abs).sum();
    println!("fresh init (zero tail) vs pixel shuffle: total |difference| = {diff}");

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.get_mut(id).mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    let mut tape = Tape::new();
    let x = tape.constant(tiles);
    let merged = lfmn_forward(&mut tape, &store, &lfmn, x)?;
    let shuffled = tape.pixel_shuffle(x, 2)?;
    let diff = (tape.value(merged) - tape.value(shuffled)).mapv(f64::abs).sum();
    println!("random weights vs pixel shuffle: total |difference| = {diff:.3}");

    let mut pstore = ParamStore::new();
    let pyramid = PyramidParams::register(&mut pstore, "pyramid", &cfg, &mut rng)?;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_shape_simple_fn((1, 16, 16, 16), || rng.gen_range(-3.0..3.0)));
    let y = pyramid_merge(&mut tape, &pstore, &pyramid, x)?;
    println!(
        "pyramid r=4: {:?} -> {:?} with {} weights (stage 1 shared by the four groups)",
        tape.value(x).dim(),
        tape.value(y).dim(),
        pstore.scalar_count()
    );
    Ok(())
}
