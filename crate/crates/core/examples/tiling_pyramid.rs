//! Pixel unshuffle/shuffle tiling and the two-stage grouping used for r = 4.
//!
//! `cargo run --example tiling_pyramid`

use ndarray::{Array2, Array3, Axis};

use holotile::tiling::{group_member, group_tiles, pixel_shuffle, pixel_unshuffle, TileStack};
use holotile::Result;

fn main() -> Result<()> {
    let x = Array2::from_shape_fn((8, 8), |(i, j)| (i * 8 + j) as u32);
    println!("image:\n{x}");

    let t2 = pixel_unshuffle(&x, 2)?;
    println!("r=2 gives {} tiles of {:?}", t2.count(), t2.tile_dim());
    for c in 0..t2.count() {
        println!("tile {c} at offset {:?}:\n{}", t2.offset(c), t2.tile(c));
    }
    assert_eq!(pixel_shuffle(&t2, 2)?, x);

    let t4 = pixel_unshuffle(&x, 4)?;
    let groups = group_tiles(&t4)?;
    for g in 0..4 {
        let members: Vec<usize> = (0..4).map(|k| group_member(g, k)).collect();
        println!("pyramid group {g} takes scale-4 tiles {members:?}");
    }
    let mut stage1 = Array3::zeros((4, 4, 4));
    for (g, stack) in groups.iter().enumerate() {
        stage1.index_axis_mut(Axis(0), g).assign(&pixel_shuffle(stack, 2)?);
    }
    let merged = pixel_shuffle(&TileStack::new(stage1, 2)?, 2)?;
    println!("shuffle2 of the four shuffled groups restores the image: {}", merged == x);
    Ok(())
}
