//! Phase-only holograms from the non-learned methods: double-phase coding,
//! Gerchberg-Saxton and gradient descent on the phase. Writes the phase maps
//! and reconstructions as PNGs.
//!
//! `cargo run --example iterative_baselines -- [out_dir] [size]`

use std::path::PathBuf;

use holotile::autodiff::optimal_scale;
use holotile::encoding::PhaseMap;
use holotile::io::{save_gray8, save_image};
use holotile::metrics::{psnr, ssim};
use holotile::optimize::{dpac_hologram, gs_iterate, reconstruct, sgd_hologram, Optics, PipelineConfig, SgdConfig};
use holotile::{fixtures, Result};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "baselines_out".into()));
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    std::fs::create_dir_all(&out).map_err(|e| holotile::Error::Io { path: out.clone(), source: e })?;

    let mut cfg = PipelineConfig::default();
    cfg.optical.distance = 1e-3;
    let target = fixtures::image(0, size, size);
    let optics = Optics::new(&cfg, size, size)?;
    save_image(&out.join("target.png"), &target)?;

    let gs = gs_iterate(&target, &cfg, 200, 0)?;
    let sgd = sgd_hologram(&target, &cfg, &SgdConfig::default(), 0)?;
    let methods: [(&str, PhaseMap); 3] = [
        ("dpac", dpac_hologram(&target, &cfg)?),
        ("gs", gs.hologram),
        ("sgd", sgd.hologram),
    ];
    for (name, holo) in methods {
        let amp = reconstruct(holo.phase(), &optics.backward)?;
        let s = optimal_scale(amp.as_slice().unwrap(), target.as_slice().unwrap());
        let rec = amp.mapv(|a| (s * a).clamp(0.0, 1.0));
        println!(
            "{name:>4}: psnr {:6.2} dB  ssim {:.4}",
            psnr(rec.view(), target.view())?,
            ssim(rec.view(), target.view())?
        );
        save_gray8(&out.join(format!("{name}_phase.png")), &holo.to_gray8())?;
        save_image(&out.join(format!("{name}_reconstruction.png")), &rec)?;
    }
    println!("GS error {:.5} -> {:.5}", gs.errors[0], gs.errors[gs.errors.len() - 1]);
    println!("SGD loss {:.5} -> {:.5}", sgd.losses[0], sgd.losses[sgd.losses.len() - 1]);
    println!("images written to {}", out.display());
    Ok(())
}
