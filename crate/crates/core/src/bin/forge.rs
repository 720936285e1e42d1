use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use centriole_forge::config::GenerationConfig;
use centriole_forge::dataset::{generate_patch_dataset, write_surrogate_set};
use centriole_forge::image::{save_mask_png, save_unit_png8, GrayImage};
use centriole_forge::manifest::read_manifest;
use centriole_forge::model::build_model;
use centriole_forge::sampler::enumerate_boxes;
use centriole_forge::seed::rng_from_seed;
use centriole_forge::segment::segment_central_cell;
use centriole_forge::slicer::SliceSampler;
use centriole_forge::surrogate::SurrogateConfig;
use centriole_forge::Result;

#[derive(Parser)]
#[command(name = "forge", version, about = "Synthetic centriole patch generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled patch dataset and its manifest.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides master_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Select the central cell of a screening image.
    Segment {
        image: PathBuf,
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render random model slices as PNGs.
    Slices {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write procedural screening images with ground-truth masks.
    Surrogate {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        test_fraction: f64,
    },
    /// Summarize a manifest.
    Stats { manifest: PathBuf },
    /// Export the voxel model as PNG planes.
    Model {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Draw candidate background boxes over an image.
    Candidates {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<GenerationConfig> {
    match path {
        Some(p) => GenerationConfig::load(p),
        None => Ok(GenerationConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let m = generate_patch_dataset(cfg, &out)?;
            println!("wrote {} records to {}", m.len(), out.display());
        }
        Command::Segment {
            image,
            mask_out,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let img = GrayImage::load_png(&image)?;
            let mask = segment_central_cell(&img, &cfg.segmenter)?;
            let [cx, cy] = mask.centroid_xy();
            println!("area_px={} centroid=({cx:.1}, {cy:.1})", mask.area_px());
            if let Some(p) = mask_out {
                save_mask_png(mask.bits().view(), &p)?;
            }
        }
        Command::Slices {
            n,
            out,
            seed,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            fs::create_dir_all(&out)?;
            let sampler = SliceSampler::new(build_model(&cfg.model)?, cfg.slicer)?;
            let mut rng = rng_from_seed(seed);
            let mut specs = String::new();
            for i in 0..n {
                let slice = sampler.sample(&mut rng)?;
                save_unit_png8(
                    slice.pixels().view(),
                    &out.join(format!("slice-{i:04}.png")),
                )?;
                specs.push_str(&serde_json::to_string(slice.spec()).map_err(std::io::Error::from)?);
                specs.push('\n');
            }
            fs::write(out.join("slices.jsonl"), specs)?;
            println!("wrote {n} slices to {}", out.display());
        }
        Command::Surrogate {
            n,
            out,
            seed,
            noise,
            test_fraction,
        } => {
            let mut cfg = SurrogateConfig {
                seed,
                ..SurrogateConfig::default()
            };
            if let Some(a) = noise {
                cfg.noise_amplitude = a;
            }
            let m = write_surrogate_set(&cfg, n, test_fraction, &out)?;
            println!("wrote {} surrogate images to {}", m.len(), out.display());
        }
        Command::Stats { manifest } => {
            let m = read_manifest(&manifest)?;
            println!("records: {}", m.len());
            let identities = m.identities();
            for (split, (pos, neg)) in m.class_counts() {
                let ids = identities.get(&split).map_or(0, Vec::len);
                println!("{split}: {pos} positive, {neg} negative, {ids} identities");
            }
        }
        Command::Model { out, config } => {
            let cfg = load_config(config.as_deref())?;
            let model = build_model(&cfg.model)?;
            model.export_debug(&out)?;
            println!("wrote {} planes to {}", model.side(), out.display());
        }
        Command::Candidates { image, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let img = GrayImage::load_png(&image)?;
            let mask = segment_central_cell(&img, &cfg.segmenter)?;
            let cands = enumerate_boxes(&img, &mask, &cfg.sampler)?;
            let (lo, range) = {
                let lo = img.pixels().iter().copied().fold(f64::INFINITY, f64::min);
                (lo, img.intensity_range().max(f64::MIN_POSITIVE))
            };
            let mut canvas = img.pixels().mapv(|v| 0.8 * (v - lo) / range);
            let top = cands.iter().map(|c| c.weight).fold(0.0, f64::max);
            for c in &cands {
                let shade = 0.3 + 0.7 * c.weight / top;
                let b = c.bbox;
                for t in 0..b.size {
                    for (y, x) in [
                        (b.y0, b.x0 + t),
                        (b.y0 + b.size - 1, b.x0 + t),
                        (b.y0 + t, b.x0),
                        (b.y0 + t, b.x0 + b.size - 1),
                    ] {
                        canvas[[y, x]] = canvas[[y, x]].max(shade);
                    }
                }
            }
            save_unit_png8(canvas.view(), &out)?;
            println!("{} candidates", cands.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_no_cell_found() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
