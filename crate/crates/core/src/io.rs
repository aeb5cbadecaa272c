//! Image and configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, Luma};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{PipelineConfig, SgdConfig, TrainConfig};
use crate::wavefield::OpticalConfig;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HOLOTILE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    R,
    G,
    B,
    Gray,
}

impl Channel {
    /// Wavelength index a color channel is displayed with (gray uses red).
    pub fn wavelength_index(self) -> usize {
        match self {
            Channel::R | Channel::Gray => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(Channel::R),
            "g" => Ok(Channel::G),
            "b" => Ok(Channel::B),
            "gray" => Ok(Channel::Gray),
            other => Err(Error::Usage(format!("unknown channel `{other}` (expected r, g, b or gray)"))),
        }
    }
}

/// How pixel values map to the target amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Pixel values are amplitudes.
    Amplitude,
    /// Pixel values are intensities; the target is their square root.
    Intensity,
}

/// Reads one channel of an 8- or 16-bit PNG or PGM, scaled to `[0, 1]`.
///
/// `gray` on a color file uses the luma conversion of the `image` crate.
pub fn load_image(path: &Path, channel: Channel) -> Result<Array2<f64>> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (raw, max, stride, offset): (Vec<u16>, f64, usize, usize) = match &img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            (img.to_luma8().into_raw().into_iter().map(u16::from).collect(), 255.0, 1, 0)
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => (img.to_luma16().into_raw(), 65535.0, 1, 0),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => match channel {
            Channel::Gray => (img.to_luma8().into_raw().into_iter().map(u16::from).collect(), 255.0, 1, 0),
            c => (
                img.to_rgb8().into_raw().into_iter().map(u16::from).collect(),
                255.0,
                3,
                c.wavelength_index(),
            ),
        },
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => match channel {
            Channel::Gray => (img.to_luma16().into_raw(), 65535.0, 1, 0),
            c => (img.to_rgb16().into_raw(), 65535.0, 3, c.wavelength_index()),
        },
        other => {
            return Err(Error::format(
                path,
                format!("unsupported pixel format {:?}; use 8- or 16-bit PNG/PGM", other.color()),
            ))
        }
    };
    let data: Vec<f64> = raw.iter().skip(offset).step_by(stride).map(|&v| v as f64 / max).collect();
    Ok(Array2::from_shape_vec((h, w), data).expect("decoded size matches"))
}

/// Largest centered window whose sides are multiples of `divisor`.
pub fn center_crop(img: &Array2<f64>, divisor: usize) -> Result<Array2<f64>> {
    let (h, w) = img.dim();
    let (ch, cw) = (h / divisor * divisor, w / divisor * divisor);
    if ch == 0 || cw == 0 {
        return Err(Error::dim(format!("{h}x{w} image is smaller than the divisor {divisor}")));
    }
    let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
    Ok(img.slice(s![y0..y0 + ch, x0..x0 + cw]).to_owned())
}

/// Writes an 8-bit grayscale image (PNG, or PGM for a `.pgm` extension).
pub fn save_gray8(path: &Path, data: &Array2<u8>) -> Result<()> {
    let (h, w) = data.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([data[[y as usize, x as usize]]]));
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    if format == ImageFormat::Pnm {
        let mut out = Vec::new();
        image::codecs::pnm::PnmEncoder::new(&mut out)
            .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary))
            .encode(img.as_raw().as_slice(), w as u32, h as u32, image::ExtendedColorType::L8)
            .map_err(|e| Error::format(path, e.to_string()))?;
        return fs::write(path, out).map_err(|e| Error::io(path, e));
    }
    img.save_with_format(path, format).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Clamps `data` to `[0, 1]` and writes it with 8 bits, rounding to nearest.
pub fn save_image(path: &Path, data: &Array2<f64>) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("cannot save non-finite samples"));
    }
    save_gray8(path, &data.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

/// Input image handling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub channel: Channel,
    pub representation: Representation,
    /// Center-crop inputs to the pipeline's size divisor instead of rejecting them.
    pub crop: bool,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            channel: Channel::Gray,
            representation: Representation::Amplitude,
            crop: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsConfig {
    pub iters: usize,
}

impl Default for GsConfig {
    fn default() -> Self {
        GsConfig { iters: 200 }
    }
}

/// Everything a command needs, as read from a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub optical: OpticalConfig,
    pub image: ImageConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub sgd: SgdConfig,
    pub gs: GsConfig,
    pub paths: PathsConfig,
}


impl RunConfig {
    /// Copies the optical section into the pipeline and checks every field.
    pub fn finalize(mut self) -> Result<Self> {
        self.optical.validate()?;
        self.pipeline.optical = self.optical.clone();
        self.pipeline.validate()?;
        self.train.validate()?;
        if !(self.sgd.lr.is_finite() && self.sgd.lr > 0.0) {
            return Err(Error::config("sgd.lr", "must be positive"));
        }
        Ok(self)
    }

    /// Pipeline settings for one color channel.
    pub fn pipeline_for(&self, channel: Channel) -> Result<PipelineConfig> {
        let cfg = PipelineConfig {
            channel: channel.wavelength_index(),
            ..self.pipeline.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the target amplitude of an image file according to `[image]`.
    pub fn load_target(&self, path: &Path, channel: Channel) -> Result<Array2<f64>> {
        let mut img = load_image(path, channel)?;
        if self.image.representation == Representation::Intensity {
            img.mapv_inplace(f64::sqrt);
        }
        let d = self.pipeline.divisor();
        if self.image.crop {
            center_crop(&img, d)
        } else if img.nrows() % d != 0 || img.ncols() % d != 0 {
            Err(Error::config(
                "image.crop",
                format!("{} is {}x{}, not divisible by {d}; enable cropping", path.display(), img.nrows(), img.ncols()),
            ))
        } else {
            Ok(img)
        }
    }
}

/// Parses a TOML document; missing keys take their defaults.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::format(origin, e.to_string().trim().to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::config(field, e.into_inner().message().trim().to_string())
    })?;
    cfg.finalize()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(THREADS_ENV, format!("must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Sizes the global worker pool from [`THREADS_ENV`]; a no-op when unset or
/// when the pool already exists.
pub fn init_threads() -> Result<()> {
    if let Some(n) = thread_cap()? {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray8_extremes_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array2::from_shape_fn((5, 7), |(i, j)| ((i * 7 + j) * 7 % 256) as u8);
        let png = dir.path().join("a.png");
        let pgm = dir.path().join("a.pgm");
        let png2 = dir.path().join("b.png");
        save_gray8(&png, &data).unwrap();
        let a = load_image(&png, Channel::Gray).unwrap();
        assert_eq!(a[[0, 0]], 0.0);
        save_gray8(&pgm, &a.mapv(|v| (v * 255.0).round() as u8)).unwrap();
        let b = load_image(&pgm, Channel::Gray).unwrap();
        save_image(&png2, &b).unwrap();
        let c = load_image(&png2, Channel::Gray).unwrap();
        assert_eq!(a, c);
        let mut ones = Array2::zeros((1, 1));
        ones[[0, 0]] = 255u8;
        save_gray8(&png, &ones).unwrap();
        assert_eq!(load_image(&png, Channel::Gray).unwrap()[[0, 0]], 1.0);
    }

    #[test]
    fn save_quantizes_and_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.png");
        let data = Array2::from_shape_fn((4, 4), |(i, j)| (i as f64 * 0.37 + j as f64 * 0.11) - 0.3);
        save_image(&p, &data).unwrap();
        let back = load_image(&p, Channel::Gray).unwrap();
        for (x, y) in data.iter().zip(back.iter()) {
            assert!((x.clamp(0.0, 1.0) - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let first = fs::read(&p).unwrap();
        save_image(&p, &data).unwrap();
        assert_eq!(first, fs::read(&p).unwrap());
        assert!(save_image(&p, &Array2::from_elem((1, 1), f64::NAN)).is_err());
    }

    #[test]
    fn color_channels_and_sixteen_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let img = image::RgbImage::from_fn(2, 1, |x, _| image::Rgb([10 + x as u8, 20, 30]));
        img.save(&p).unwrap();
        assert_eq!(load_image(&p, Channel::R).unwrap()[[0, 1]], 11.0 / 255.0);
        assert_eq!(load_image(&p, Channel::B).unwrap()[[0, 0]], 30.0 / 255.0);
        let p16 = dir.path().join("d.png");
        image::ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(1, 1, |_, _| Luma([65535u16]))
            .save(&p16)
            .unwrap();
        assert_eq!(load_image(&p16, Channel::Gray).unwrap()[[0, 0]], 1.0);
    }

    #[test]
    fn missing_and_garbage_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image(&dir.path().join("none.png"), Channel::Gray), Err(Error::Io { .. })));
        let junk = dir.path().join("junk.png");
        fs::write(&junk, b"not an image").unwrap();
        assert!(load_image(&junk, Channel::Gray).is_err());
    }

    #[test]
    fn crop_to_divisor() {
        let img = Array2::from_shape_fn((10, 9), |(i, j)| (i * 9 + j) as f64);
        let c = center_crop(&img, 4).unwrap();
        assert_eq!(c.dim(), (8, 8));
        assert_eq!(c[[0, 0]], img[[1, 0]]);
        assert!(center_crop(&img, 16).is_err());
    }

    #[test]
    fn empty_config_is_default() {
        let cfg = parse_config("", Path::new("empty.toml")).unwrap();
        assert_eq!(cfg.optical.pitch, 3.74e-6);
        assert_eq!(cfg.optical.wavelengths, vec![680e-9, 520e-9, 450e-9]);
        assert_eq!(cfg.train.adam.lr, 5e-4);
        assert_eq!(cfg.train.adam.beta1, 0.9);
        assert_eq!(cfg.train.adam.beta2, 0.999);
        assert_eq!(cfg.pipeline.optical, cfg.optical);
    }

    #[test]
    fn field_paths_in_errors() {
        let bad = |text: &str| parse_config(text, Path::new("x.toml")).unwrap_err();
        assert!(matches!(bad("[optical]\npitch = -1.0\n"), Error::Config { ref field, .. } if field == "optical.pitch"));
        assert!(matches!(bad("[pipeline]\nscale = 3\n"), Error::Config { ref field, .. } if field == "pipeline.scale"));
        assert!(matches!(bad("[pipeline.lfmn]\nfeatures = \"x\"\n"), Error::Config { ref field, .. } if field == "pipeline.lfmn.features"));
        assert!(matches!(bad("[train]\nstepz = 3\n"), Error::Config { ref field, ref message } if field.starts_with("train") && message.contains("stepz")));
        assert!(matches!(bad("[[["), Error::Format { .. }));
    }
}
