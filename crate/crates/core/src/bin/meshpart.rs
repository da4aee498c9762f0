use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meshpart::mesh::primitives::face_template;
use meshpart::mesh::{read_obj, save_obj, vertex_distance_field, write_ply_colored};
use meshpart::model::Checkpoint;
use meshpart::nmf::compute_local_weights;
use meshpart::pipeline::{
    checkpoint_config, diversity_report, read_mesh_dir, subsample, synth_faces, train_model, Dataset, RunConfig,
};
use meshpart::sampling::{build_hierarchy, DEFAULT_FACTOR, DEFAULT_LEVELS};
use meshpart::{Error, Mesh, Result};

const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "meshpart", version, about = "Part-aware mesh autoencoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in face template as OBJ.
    MakeTemplate {
        #[arg(long, default_value_t = 40)]
        columns: usize,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic face dataset from bump deformations of a template.
    SynthData {
        #[arg(long)]
        n: usize,
        /// Defaults to the built-in 1280-vertex face.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Factorize the coarsest template level into per-part local weights.
    NmfWeights {
        #[arg(long)]
        template: PathBuf,
        #[arg(long, default_value_t = 4)]
        parts: usize,
        #[arg(long, default_value_t = 7.5)]
        sparsity: f64,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = DEFAULT_FACTOR)]
        factor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write one weight-colored template PLY per part.
        #[arg(long)]
        ply_dir: Option<PathBuf>,
    },
    /// Train on a dataset directory's train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_local_weights: bool,
        #[arg(long)]
        no_projection: bool,
    },
    /// Encode and decode one mesh.
    Reconstruct {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Move one part of the source toward the target in equal steps.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        part: usize,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Take the listed parts from the target and the rest from the source.
    Swap {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        parts: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every single-part swap between sampled source and target faces.
    SynthSwaps {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value_t = 5)]
        n_sources: usize,
        #[arg(long, default_value_t = 11)]
        n_targets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-vertex distance between two registered meshes.
    Hausdorff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint PCA of train, test and synthesized encodings.
    EmbedViz {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        /// Meshes drawn per set (seeded); all when omitted.
        #[arg(long)]
        max_per_set: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { EXIT_NUMERIC } else { EXIT_DATA })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::MakeTemplate { columns, rows, out } => {
            if columns < 2 || rows < 2 {
                return Err(Error::Config("template needs at least 2 columns and 2 rows".into()));
            }
            save_obj(out, &face_template(columns, rows))
        }
        Command::SynthData { n, template, seed, out } => {
            let template = match template {
                Some(p) => read_obj(p)?,
                None => face_template(40, 32),
            };
            let data = synth_faces(n, &template, seed)?;
            data.save(&out)?;
            println!(
                "{} train, {} test faces written to {}",
                data.train.len(),
                data.test.len(),
                out.display()
            );
            Ok(())
        }
        Command::NmfWeights {
            template,
            parts,
            sparsity,
            restarts,
            iterations,
            levels,
            factor,
            seed,
            out,
            ply_dir,
        } => {
            let template = read_obj(template)?;
            let hierarchy = build_hierarchy(&template, levels, factor)?;
            let weights = compute_local_weights(hierarchy.coarsest(), parts, sparsity, restarts, iterations, seed)?;
            fs::write(&out, weights.to_csv())?;
            if let Some(dir) = ply_dir {
                fs::create_dir_all(&dir)?;
                let fine = hierarchy.upsample_to_template(&weights.weights)?;
                for k in 0..parts {
                    let ply = write_ply_colored(&template, &fine.col_values(k))?;
                    fs::write(dir.join(format!("part_{k}.ply")), ply)?;
                }
            }
            println!("objective {}", weights.objective);
            Ok(())
        }
        Command::Train {
            data,
            config,
            seed,
            out,
            no_local_weights,
            no_projection,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.ablation.no_local_weights |= no_local_weights;
            cfg.ablation.no_projection |= no_projection;
            let dataset = Dataset::load(&data)?;
            match train_model(&dataset, &cfg) {
                Ok(ckpt) => {
                    ckpt.save(&out)?;
                    if let Some(m) = ckpt.metrics.last() {
                        println!("epoch {} recon {} cycle {}", m.epoch, m.recon_l1, m.cycle);
                    }
                    Ok(())
                }
                Err(failure) => {
                    if let Some(good) = &failure.last_good {
                        let path = with_suffix(&out, ".last-good");
                        good.save(&path)?;
                        eprintln!("last good state saved to {}", path.display());
                    }
                    Err(failure.into())
                }
            }
        }
        Command::Reconstruct { ckpt, input, out } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let mesh = load_registered(&ckpt, &input)?;
            save_obj(out, &ckpt.reconstruct(&mesh)?)
        }
        Command::Interpolate {
            ckpt,
            source,
            target,
            part,
            steps,
            out,
        } => {
            if steps < 1 {
                return Err(Error::Config("--steps must be positive".into()));
            }
            let ckpt = load_checkpoint(&ckpt)?;
            let s = ckpt.part_encodings(&load_registered(&ckpt, &source)?)?;
            let t = ckpt.part_encodings(&load_registered(&ckpt, &target)?)?;
            fs::create_dir_all(&out)?;
            let mut meshes = Vec::with_capacity(steps);
            for i in 1..=steps {
                let alpha = i as f64 / (steps + 1) as f64;
                let mesh = ckpt.decode_parts(&ckpt.interpolated_parts(&s, &t, part, alpha)?)?;
                save_obj(out.join(format!("step_{i}.obj")), &mesh)?;
                meshes.push(mesh);
            }
            let field = vertex_distance_field(&meshes[0], &meshes[steps - 1])?;
            fs::write(
                out.join("distance.ply"),
                write_ply_colored(&meshes[0], &field.per_vertex)?,
            )?;
            println!("{}", field.hausdorff);
            Ok(())
        }
        Command::Swap {
            ckpt,
            source,
            target,
            parts,
            out,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let s = load_registered(&ckpt, &source)?;
            let t = load_registered(&ckpt, &target)?;
            save_obj(out, &ckpt.swap_parts(&s, &t, &parts)?)
        }
        Command::SynthSwaps {
            ckpt,
            sources,
            targets,
            n_sources,
            n_targets,
            seed,
            out,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let pick = |dir: &Path, n: usize, seed: u64| -> Result<Vec<Mesh>> {
                let all = registered_dir(&ckpt, dir)?;
                if all.len() < n {
                    return Err(Error::Data(format!(
                        "{} has {} meshes, need {n}",
                        dir.display(),
                        all.len()
                    )));
                }
                Ok(subsample(&all, n, seed))
            };
            let src = pick(&sources, n_sources, seed)?;
            let tgt = pick(&targets, n_targets, seed.wrapping_add(1))?;
            fs::create_dir_all(&out)?;
            let swaps = ckpt.part_synthesis(&src, &tgt)?;
            for s in &swaps {
                save_obj(
                    out.join(format!("swap_s{:02}_t{:02}_p{}.obj", s.source, s.target, s.part)),
                    &s.mesh,
                )?;
            }
            println!("{} faces written to {}", swaps.len(), out.display());
            Ok(())
        }
        Command::Hausdorff { a, b, out } => {
            let a = read_obj(a)?;
            let b = read_obj(b)?;
            let field = vertex_distance_field(&a, &b)?;
            fs::write(out, write_ply_colored(&a, &field.per_vertex)?)?;
            println!("{}", field.hausdorff);
            Ok(())
        }
        Command::EmbedViz {
            ckpt,
            train,
            test,
            synth,
            max_per_set,
            seed,
            out,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let mut sets = Vec::new();
            for (i, (label, dir)) in [("train", &train), ("test", &test), ("synth", &synth)]
                .into_iter()
                .enumerate()
            {
                let meshes = registered_dir(&ckpt, dir)?;
                let meshes = match max_per_set {
                    Some(m) => subsample(&meshes, m, seed.wrapping_add(i as u64)),
                    None => meshes,
                };
                sets.push((label.to_string(), meshes));
            }
            let report = diversity_report(&ckpt, &sets)?;
            fs::write(&out, report.to_csv())?;
            fs::write(with_suffix(&out, ".ellipses.csv"), report.ellipses_csv())?;
            for e in &report.ellipses {
                println!("{} count {} area {}", e.label, e.count, e.area);
            }
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    checkpoint_config(&ckpt)?;
    Ok(ckpt)
}

fn load_registered(ckpt: &Checkpoint, path: &Path) -> Result<Mesh> {
    let mesh = read_obj(path)?;
    ensure_registered(ckpt, path, &mesh)?;
    Ok(mesh)
}

fn registered_dir(ckpt: &Checkpoint, dir: &Path) -> Result<Vec<Mesh>> {
    let meshes = read_mesh_dir(dir)?;
    if meshes.is_empty() {
        return Err(Error::Data(format!("{} holds no .obj files", dir.display())));
    }
    meshes
        .into_iter()
        .map(|(p, m)| ensure_registered(ckpt, &p, &m).map(|()| m))
        .collect()
}

fn ensure_registered(ckpt: &Checkpoint, path: &Path, mesh: &Mesh) -> Result<()> {
    if mesh.same_topology(ckpt.template()) {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "{} does not share the checkpoint template's topology",
            path.display()
        )))
    }
}
