//! Writes the synthetic fixture images as PNGs, ready for `holotile train
//! --dataset-dir`.
//!
//! `cargo run --example write_fixtures -- [dir] [count] [size]`

use std::path::PathBuf;

use holotile::io::save_image;
use holotile::{fixtures, Result};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);
    std::fs::create_dir_all(&dir).map_err(|e| holotile::Error::Io { path: dir.clone(), source: e })?;
    for (k, img) in fixtures::dataset(count, size, size).iter().enumerate() {
        let path = dir.join(format!("fixture_{k:02}.png"));
        save_image(&path, img)?;
        println!("{}", path.display());
    }
    Ok(())
}
