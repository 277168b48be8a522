use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agcr::codec::container::{parse_container, Container, Layout, LossTag, ToleranceKind};
use agcr::codec::{encode_with_report, EncodeConfig, LossSpec, Strategy};
use agcr::decode::{container_shapes, decode_parsed, extract_bin, DecodeOptions};
use agcr::raster_io::{compute_stats, load_raster, save_raster};
use agcr::threshold::FloorMode;
use agcr::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "agcr", version, about = "Region-based lossless raster compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    InPlace,
    Binned,
    Mixed,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a TIFF or raw raster into an .agcr container.
    Compress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        strategy: StrategyArg,
        /// Number of tolerance bins (skips automatic bin reduction).
        #[arg(long, value_name = "K", value_parser = clap::value_parser!(u16).range(1..=256))]
        bins: Option<u16>,
        /// Gaussian sigma before thresholding (skips the sigma search).
        #[arg(long, value_name = "S")]
        sigma: Option<f64>,
        /// Intensity floor: a value, "auto" (Otsu when warranted) or "none".
        #[arg(long, value_name = "F")]
        floor: Option<String>,
        /// Reduce contours to at most V vertices per 100 region pixels.
        #[arg(long, value_name = "V", conflicts_with = "no_reduce")]
        reduce: Option<usize>,
        /// Keep exact contours.
        #[arg(long)]
        no_reduce: bool,
        /// Try every background tolerance and every backend per component.
        #[arg(long)]
        slowest: bool,
        /// Also store the tolerance raster as an image and keep the smaller (alias -NOVIS).
        #[arg(long)]
        novis: bool,
        /// 8-bit label mask assigning each pixel its bin (AGCR+).
        #[arg(long, value_name = "PATH")]
        template: Option<PathBuf>,
        /// Per-bin loss: BIN:lossless, BIN:mean or BIN:<ratio>. Repeatable.
        #[arg(long = "loss", value_name = "BIN:SPEC")]
        loss: Vec<String>,
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
        /// Print machine-readable results.
        #[arg(long)]
        json: bool,
    },
    /// Restore the raster from a container.
    Decompress {
        input: PathBuf,
        output: PathBuf,
        /// Report the embedded checksum comparison.
        #[arg(long)]
        verify: bool,
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Show header fields and the per-bin table.
    Inspect {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Decode one bin; all other pixels are 0.
    ExtractBin {
        input: PathBuf,
        bin: usize,
        output: PathBuf,
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
    },
    /// Write the stored contours as Wavefront OBJ polylines, z = tolerance.
    ExportObj { input: PathBuf, output: PathBuf },
    /// Image statistics that drive the automatic configuration.
    Stats {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Template(_)
            | Error::UnsupportedFormat(_)
            | Error::Unsupported(_)
            | Error::BackendUnavailable(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn parse_loss(items: &[String]) -> Result<BTreeMap<u8, LossSpec>, Failure> {
    let mut map = BTreeMap::new();
    for item in items {
        let (bin, spec) = item
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("--loss {item}: expected BIN:SPEC")))?;
        let bin: u8 = bin
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--loss {item}: bin must be 0..=255")))?;
        let spec = match spec.trim().to_ascii_lowercase().as_str() {
            "lossless" => LossSpec::Lossless,
            "mean" => LossSpec::Mean,
            s => {
                let ratio: f32 = s.trim_start_matches("ratio=").parse().map_err(|_| {
                    Failure::Usage(format!("--loss {item}: spec is lossless, mean or a ratio"))
                })?;
                if !(ratio.is_finite() && ratio >= 1.0) {
                    return Err(Failure::Usage(format!("--loss {item}: ratio must be >= 1")));
                }
                LossSpec::Ratio(ratio)
            }
        };
        if map.insert(bin, spec).is_some() {
            return Err(Failure::Usage(format!("--loss given twice for bin {bin}")));
        }
    }
    Ok(map)
}

fn parse_floor(s: Option<&str>) -> Result<FloorMode, Failure> {
    match s {
        None | Some("auto") => Ok(FloorMode::Auto),
        Some("none") | Some("off") => Ok(FloorMode::Disabled),
        Some(v) => v
            .parse()
            .map(FloorMode::Value)
            .map_err(|_| Failure::Usage(format!("--floor {v}: expected an intensity, auto or none"))),
    }
}

fn read_container(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn threads_or_default(t: Option<usize>) -> usize {
    t.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1)
}

fn loss_name(l: LossTag) -> String {
    match l {
        LossTag::Lossless => "lossless".into(),
        LossTag::Ratio(r) => format!("ratio {r}"),
        LossTag::Mean => "mean".into(),
    }
}

fn layout_name(l: Layout) -> &'static str {
    match l {
        Layout::None => "-",
        Layout::Sequence => "sequence",
        Layout::Cropped => "cropped",
    }
}

fn bin_table(c: &Container) -> Vec<Value> {
    c.bins
        .iter()
        .map(|(d, _)| {
            json!({
                "bin": d.tolerance,
                "offset": d.offset,
                "codec": if d.layout == Layout::None { Value::Null } else { json!(d.payload.codec.name()) },
                "layout": layout_name(d.layout),
                "loss": loss_name(d.loss),
                "bytes": d.payload.len,
            })
        })
        .collect()
}

fn describe(c: &Container, bytes: usize) -> Value {
    let h = &c.header;
    json!({
        "width": h.width,
        "height": h.height,
        "bit_depth": h.bit_depth,
        "k": h.k,
        "strategy": h.strategy.name(),
        "flags": h.flags,
        "sigma": h.sigma,
        "floor": h.floor,
        "reduce": h.reduce,
        "packed_values": c.packing.len(),
        "identity_packing": c.packing.is_identity(),
        "tolerance": match c.tolerance_kind { ToleranceKind::Shapes => "shapes", ToleranceKind::Raster => "raster" },
        "tolerance_bytes": c.tolerance_bytes.len(),
        "in_place_codec": c.whole.as_ref().map(|(i, _)| i.codec.name()),
        "in_place_bytes": c.whole.as_ref().map(|(i, _)| i.len),
        "bins": bin_table(c),
        "bytes": bytes,
    })
}

fn print_bin_table(c: &Container) {
    if let Some((info, _)) = &c.whole {
        println!("in-place payload: {} ({} bytes)", info.codec, info.len);
    }
    println!("{:>4} {:>7} {:>9} {:>9} {:>12} {:>10}", "bin", "offset", "codec", "layout", "loss", "bytes");
    for (d, _) in &c.bins {
        let codec = if d.layout == Layout::None { "-" } else { d.payload.codec.name() };
        println!(
            "{:>4} {:>7} {:>9} {:>9} {:>12} {:>10}",
            d.tolerance,
            d.offset,
            codec,
            layout_name(d.layout),
            loss_name(d.loss),
            d.payload.len
        );
    }
}

fn raw_bytes(w: u32, h: u32, depth: u8) -> u64 {
    w as u64 * h as u64 * if depth <= 8 { 1 } else { 2 }
}

#[allow(clippy::too_many_arguments)]
fn compress(
    input: &Path,
    output: &Path,
    strategy: StrategyArg,
    bins: Option<u16>,
    sigma: Option<f64>,
    floor: Option<&str>,
    reduce: Option<usize>,
    no_reduce: bool,
    slowest: bool,
    novis: bool,
    template: Option<&Path>,
    loss: &[String],
    threads: Option<usize>,
    json_out: bool,
) -> Result<(), Failure> {
    let start = Instant::now();
    let raster = load_raster(input)?;
    let template = template.map(load_raster).transpose()?;
    let loss = parse_loss(loss)?;
    if !loss.is_empty() && template.is_none() && bins.is_none() {
        return Err(Failure::Usage("--loss needs --template or --bins".into()));
    }
    if let Some(s) = sigma {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Failure::Usage(format!("--sigma {s}: must be >= 0")));
        }
    }
    if reduce == Some(0) {
        return Err(Failure::Usage("--reduce must be at least 1".into()));
    }
    let cfg = EncodeConfig {
        strategy: match strategy {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::InPlace => Strategy::InPlace,
            StrategyArg::Binned => Strategy::Binned,
            StrategyArg::Mixed => Strategy::Mixed,
        },
        bins: bins.map(usize::from),
        sigma,
        floor: parse_floor(floor)?,
        reduce: if no_reduce { None } else { reduce },
        slowest,
        novis,
        template,
        loss,
        threads: threads_or_default(threads),
        ..EncodeConfig::default()
    };
    let encoded = encode_with_report(&raster, &cfg)?;
    std::fs::write(output, &encoded.bytes).map_err(|e| io_err(output, e))?;
    let c = parse_container(&encoded.bytes, &Default::default())?;
    let raw = raw_bytes(raster.width(), raster.height(), raster.bit_depth());
    let input_bytes = std::fs::metadata(input).map(|m| m.len()).unwrap_or(0);
    let out_bytes = encoded.bytes.len() as u64;
    let ratio = raw as f64 / out_bytes as f64;
    let r = &encoded.report;
    if json_out {
        let v = json!({
            "command": "compress",
            "input": input.display().to_string(),
            "output": output.display().to_string(),
            "bytes_in": raw,
            "input_file_bytes": input_bytes,
            "bytes_out": out_bytes,
            "ratio": ratio,
            "strategy": r.strategy.name(),
            "candidate": r.label,
            "k": r.k,
            "sigma": r.sigma,
            "regions": r.regions,
            "vertices": r.vertices,
            "background": r.background,
            "bins": bin_table(&c),
            "candidates": r.candidates.iter().map(|c| json!({"label": c.label, "strategy": c.strategy.name(), "bytes": c.bytes})).collect::<Vec<_>>(),
            "wall_ms": start.elapsed().as_millis() as u64,
        });
        println!("{v}");
    } else {
        println!("{} -> {}", input.display(), output.display());
        println!("size: {raw} -> {out_bytes} bytes, ratio {ratio:.3}");
        println!("strategy: {} ({}), k = {}, sigma = {}", r.strategy, r.label, r.k, r.sigma);
        println!("shapes: {} regions, {} vertices, background {}", r.regions, r.vertices, r.background);
        print_bin_table(&c);
    }
    Ok(())
}

fn decompress(input: &Path, output: &Path, verify: bool, threads: Option<usize>, json_out: bool) -> Result<(), Failure> {
    let bytes = read_container(input)?;
    let c = parse_container(&bytes, &Default::default())?;
    let raster = decode_parsed(&c, threads_or_default(threads))?;
    save_raster(&raster, output)?;
    if json_out {
        println!(
            "{}",
            json!({
                "command": "decompress",
                "input": input.display().to_string(),
                "output": output.display().to_string(),
                "width": raster.width(),
                "height": raster.height(),
                "bit_depth": raster.bit_depth(),
                "checksum": format!("{:08x}", c.raster_crc),
                "verified": verify,
            })
        );
    } else if verify {
        println!("OK: checksum {:08x} matches", c.raster_crc);
    } else {
        println!("{}x{} raster written to {}", raster.width(), raster.height(), output.display());
    }
    Ok(())
}

fn inspect(input: &Path, json_out: bool) -> Result<(), Failure> {
    let bytes = read_container(input)?;
    let c = parse_container(&bytes, &Default::default())?;
    if json_out {
        println!("{}", describe(&c, bytes.len()));
        return Ok(());
    }
    let h = &c.header;
    println!("{}: {} bytes", input.display(), bytes.len());
    println!("image: {}x{}, {} bits", h.width, h.height, h.bit_depth);
    println!("strategy: {}, k = {}, flags {:#06x}", h.strategy, h.k, h.flags);
    let floor = h.floor.map(|f| f.to_string()).unwrap_or_else(|| "none".into());
    let reduce = h.reduce.map(|r| r.to_string()).unwrap_or_else(|| "off".into());
    println!("sigma: {}, floor: {floor}, reduce: {reduce}", h.sigma);
    println!(
        "packing: {} values{}",
        c.packing.len(),
        if c.packing.is_identity() { " (identity)" } else { "" }
    );
    let kind = match c.tolerance_kind {
        ToleranceKind::Shapes => "shapes",
        ToleranceKind::Raster => "raster",
    };
    println!("tolerance: {kind}, {} bytes", c.tolerance_bytes.len());
    print_bin_table(&c);
    Ok(())
}

fn export_obj(input: &Path, output: &Path) -> Result<(), Failure> {
    let bytes = read_container(input)?;
    let c = parse_container(&bytes, &Default::default())?;
    let set = container_shapes(&c)?.ok_or_else(|| {
        Failure::Usage("container holds no shapes: its tolerance raster is stored as an image".into())
    })?;
    let (w, h) = (c.header.width as i64, c.header.height as i64);
    let mut out = String::new();
    let mut next = 1usize;
    let mut ring = |out: &mut String, pts: &[(i64, i64)], z: u8| {
        for &(x, y) in pts {
            let _ = writeln!(out, "v {x} {y} {z}");
        }
        let idx: Vec<String> = (next..next + pts.len()).chain(std::iter::once(next)).map(|i| i.to_string()).collect();
        let _ = writeln!(out, "l {}", idx.join(" "));
        next += pts.len();
    };
    let _ = writeln!(out, "# agcr contours: {}x{}, k = {}", w, h, c.header.k);
    let _ = writeln!(out, "o background");
    ring(&mut out, &[(0, 0), (w - 1, 0), (w - 1, h - 1), (0, h - 1)], set.background);
    for (i, s) in set.shapes.iter().enumerate() {
        let _ = writeln!(out, "o region_{i}");
        for r in s.contour.rings() {
            let pts: Vec<(i64, i64)> = r.iter().map(|v| (v.x as i64, v.y as i64)).collect();
            ring(&mut out, &pts, s.tolerance);
        }
    }
    std::fs::write(output, out).map_err(|e| io_err(output, e))?;
    Ok(())
}

fn stats(input: &Path, json_out: bool) -> Result<(), Failure> {
    let r = load_raster(input)?;
    let s = compute_stats(&r);
    if json_out {
        println!(
            "{}",
            json!({
                "command": "stats",
                "input": input.display().to_string(),
                "width": r.width(),
                "height": r.height(),
                "bit_depth": r.bit_depth(),
                "gini": s.gini,
                "shannon_entropy": s.shannon_entropy,
                "std_dev": s.std_dev,
                "normalized_contrast": s.normalized_contrast,
                "dynamic_range": [s.dynamic_range.0, s.dynamic_range.1],
                "background_fraction": s.background_fraction,
            })
        );
    } else {
        println!("{}: {}x{}, {} bits", input.display(), r.width(), r.height(), r.bit_depth());
        println!("gini: {:.6}", s.gini);
        println!("entropy: {:.6} bits", s.shannon_entropy);
        println!("std dev: {:.3}", s.std_dev);
        println!("contrast: {:.6}", s.normalized_contrast);
        println!("range: {}..={}", s.dynamic_range.0, s.dynamic_range.1);
        println!("background: {:.6}", s.background_fraction);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Compress {
            input,
            output,
            strategy,
            bins,
            sigma,
            floor,
            reduce,
            no_reduce,
            slowest,
            novis,
            template,
            loss,
            threads,
            json,
        } => compress(
            &input,
            &output,
            strategy,
            bins,
            sigma,
            floor.as_deref(),
            reduce,
            no_reduce,
            slowest,
            novis,
            template.as_deref(),
            &loss,
            threads,
            json,
        ),
        Command::Decompress {
            input,
            output,
            verify,
            threads,
            json,
        } => decompress(&input, &output, verify, threads, json),
        Command::Inspect { input, json } => inspect(&input, json),
        Command::ExtractBin {
            input,
            bin,
            output,
            threads,
        } => {
            let bytes = read_container(&input)?;
            let r = extract_bin(&bytes, bin, &DecodeOptions::with_threads(threads_or_default(threads)))?;
            save_raster(&r, &output)?;
            Ok(())
        }
        Command::ExportObj { input, output } => export_obj(&input, &output),
        Command::Stats { input, json } => stats(&input, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // The single-dash spelling is accepted for compatibility.
    let args = std::env::args_os().map(|a| if a == "-NOVIS" { "--novis".into() } else { a });
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
