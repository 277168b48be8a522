//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use agcr::codec::backend::CodecId;
use agcr::codec::container::{parse_container, DecodeLimits, Strategy};
use agcr::codec::encode::{encode, encode_with_report, EncodeConfig, LossSpec};
use agcr::contour::{optimize_contour, trace_contour};
use agcr::decode::{decode_container, extract_bin, fill_region, read_tolerance, DecodeOptions};
use agcr::raster_io::{depth_for_max, Raster};
use agcr::region_store::{min_region_size, signbit_decode, signbit_encode};
use common::PixelSet;
use rand::Rng;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

type Outcome = Result<String, String>;

const STRATEGIES: [Strategy; 4] = [Strategy::InPlace, Strategy::Binned, Strategy::Mixed, Strategy::Auto];

fn check(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} {name}: {detail} [{secs:.1}s]");
    let _ = std::io::stdout().flush();
    out.is_ok()
}

fn cfg(strategy: Strategy) -> EncodeConfig {
    EncodeConfig { strategy, threads: 4, ..Default::default() }
}

struct Encoded {
    name: String,
    raster: Raster,
    strategy: Strategy,
    bytes: Vec<u8>,
}

fn corpus() -> Vec<(String, Raster)> {
    let mut out: Vec<(String, Raster)> = (0..500u64)
        .map(|seed| (format!("random {seed}"), common::random_raster(&mut common::rng(seed))))
        .collect();
    out.extend(common::adversarial_rasters().into_iter().map(|(n, r)| (n.to_string(), r)));
    out
}

fn round_trip(encoded: &mut Vec<Encoded>) -> Outcome {
    let inputs = corpus();
    let mut failures = Vec::new();
    let mut total = 0;
    for (name, r) in &inputs {
        for s in STRATEGIES {
            total += 1;
            match encode(r, &cfg(s)) {
                Ok(bytes) => {
                    match decode_container(&bytes, &DecodeOptions::with_threads(1)) {
                        Ok(d) if &d == r => {}
                        Ok(_) => failures.push(format!("{name} {s}: differs")),
                        Err(e) => failures.push(format!("{name} {s}: {e}")),
                    }
                    encoded.push(Encoded { name: name.clone(), raster: r.clone(), strategy: s, bytes });
                }
                Err(e) => failures.push(format!("{name} {s}: encode {e}")),
            }
        }
    }
    let msg = format!("{}/{total} exact over {} rasters x {} strategies", total - failures.len(), inputs.len(), STRATEGIES.len());
    if failures.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; first: {}", failures[0]))
    }
}

fn region_corpus() -> Vec<(String, PixelSet)> {
    let mut out: Vec<(String, PixelSet)> = (0..1000u64)
        .map(|seed| (format!("region {seed}"), common::random_region(&mut common::rng(seed), 64)))
        .collect();
    out.extend(common::adversarial_regions().into_iter().map(|(n, s)| (n.to_string(), s)));
    out
}

fn pixel_perfect(regions: &[(String, PixelSet)]) -> Outcome {
    let mut bad = Vec::new();
    let mut holes = 0;
    for (name, px) in regions {
        let r = common::region_of(px);
        let traced = trace_contour(&r).map_err(|e| format!("{name}: {e}"))?;
        holes += (!traced.holes.is_empty()) as usize;
        let o = optimize_contour(&traced, &r);
        match fill_region(&o) {
            Ok(m) if common::set_of(&m) == *px => {}
            _ => bad.push(name.clone()),
        }
    }
    let msg = format!("{}/{} regions filled exactly ({holes} with holes)", regions.len() - bad.len(), regions.len());
    if bad.is_empty() && holes > 0 {
        Ok(msg)
    } else {
        Err(format!("{msg}; failing: {:?}", &bad[..bad.len().min(5)]))
    }
}

/// Rows of `run + thick` pixels, each row shifted `run` to the right.
fn staircase(steps: u32, run: u32, thick: u32) -> PixelSet {
    (0..steps).flat_map(|i| (i * run..i * run + run + thick).map(move |x| (x, i))).collect()
}

fn vertex_economy(regions: &[(String, PixelSet)]) -> Outcome {
    let mut at_most = 0;
    for (_, px) in regions {
        let r = common::region_of(px);
        let o = optimize_contour(&trace_contour(&r).unwrap(), &r);
        at_most += (o.vertex_count() <= common::crack_corner_count(px)) as usize;
    }
    let share = at_most as f64 / regions.len() as f64;

    let mut stairs = 0;
    let mut stairs_fewer = 0;
    for steps in 3..=12 {
        for run in 1..=4 {
            for thick in 1..=3 {
                let px = staircase(steps, run, thick);
                let r = common::region_of(&px);
                let o = optimize_contour(&trace_contour(&r).unwrap(), &r);
                stairs += 1;
                stairs_fewer += (o.vertex_count() < common::crack_corner_count(&px)) as usize;
            }
        }
    }

    // Irregular 256x256 blob at one threshold: overlapping discs.
    let mut rg = common::rng(256);
    let discs: Vec<(f64, f64, f64)> =
        (0..6).map(|_| (rg.gen_range(90.0..166.0), rg.gen_range(90.0..166.0), rg.gen_range(25.0..50.0))).collect();
    let inside = |x: u32, y: u32| {
        discs.iter().any(|&(cx, cy, rad)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= rad * rad)
    };
    let blob = Raster::from_fn(256, 256, 16, |x, y| if inside(x, y) { 40000 + (x + y) as u16 % 7 } else { 50 + (x * y) as u16 % 5 })
        .unwrap();
    let area = blob.pixels().iter().filter(|&&p| p >= 40000).count();
    let cfg = EncodeConfig { bins: Some(2), sigma: Some(0.0), ..cfg(Strategy::Binned) };
    let report = encode_with_report(&blob, &cfg).map_err(|e| e.to_string())?.report;
    let per_pixel = report.vertices as f64 / area as f64;

    let msg = format!(
        "{:.2}% of regions at or below the axis-aligned count; staircases fewer {stairs_fewer}/{stairs}; \
         blob {} stored vertices / {area} pixels = {:.3}%",
        share * 100.0,
        report.vertices,
        per_pixel * 100.0
    );
    if share >= 0.95 && stairs_fewer == stairs && per_pixel <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn optimizer_laws(regions: &[(String, PixelSet)]) -> Outcome {
    let mut bad = Vec::new();
    for (name, px) in regions {
        let r = common::region_of(px);
        let traced = trace_contour(&r).unwrap();
        let once = optimize_contour(&traced, &r);
        let twice = optimize_contour(&once, &r);
        if once.vertex_count() > traced.vertex_count() || twice != once {
            bad.push(name.clone());
        }
    }
    let msg = format!("{}/{} monotone and idempotent", regions.len() - bad.len(), regions.len());
    if bad.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; failing: {:?}", &bad[..bad.len().min(5)]))
    }
}

fn sign_bit() -> Outcome {
    if (signbit_encode(3), signbit_encode(-3), signbit_encode(0)) != (6, 7, 0) {
        return Err("examples differ".into());
    }
    for d in -1_000_000i64..=1_000_000 {
        if signbit_decode(signbit_encode(d)) != d {
            return Err(format!("{d} does not round trip"));
        }
    }
    Ok("2000001 deltas round trip; +3->6, -3->7, 0->0".into())
}

fn min_size() -> Outcome {
    let got = (min_region_size(1000, 1000), min_region_size(4096, 4096));
    if got == (32, 67) {
        Ok("m(1000x1000)=32, m(4096x4096)=67".into())
    } else {
        Err(format!("got {got:?}"))
    }
}

fn thread_invariance(encoded: &[Encoded]) -> Outcome {
    let mut bad = Vec::new();
    for e in encoded {
        let one = decode_container(&e.bytes, &DecodeOptions::with_threads(1)).ok();
        for t in [2, 8] {
            if decode_container(&e.bytes, &DecodeOptions::with_threads(t)).ok() != one {
                bad.push(format!("{} {} threads {t}", e.name, e.strategy));
            }
        }
    }
    let msg = format!("{}/{} containers identical at 1, 2 and 8 threads", encoded.len() - bad.len(), encoded.len());
    if bad.is_empty() && !encoded.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; first: {:?}", bad.first()))
    }
}

/// Smallest of bzip2 -9, xz -9 / -9e and JPEG-LS on the raw samples.
fn best_backend(r: &Raster) -> (usize, &'static str) {
    let le: Vec<u8> = r.pixels().iter().flat_map(|p| p.to_le_bytes()).collect();
    let mut sizes = Vec::new();

    let mut bz = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::best());
    bz.write_all(&le).unwrap();
    sizes.push((bz.finish().unwrap().len(), "bzip2"));

    for preset in [9, 9 | 0x8000_0000] {
        let mut xz = xz2::write::XzEncoder::new(Vec::new(), preset);
        xz.write_all(&le).unwrap();
        sizes.push((xz.finish().unwrap().len(), "xz"));
    }

    #[cfg(feature = "jpeg-ls")]
    for bits in [16u8, depth_for_max(r.max_value() as u32).max(2)] {
        let ne: Vec<u8> = if bits <= 8 {
            r.pixels().iter().map(|&p| p as u8).collect()
        } else {
            r.pixels().iter().flat_map(|p| p.to_ne_bytes()).collect()
        };
        let info = charls::FrameInfo { width: r.width(), height: r.height(), bits_per_sample: bits as i32, component_count: 1 };
        sizes.push((charls::CharLS::default().encode(info, 0, &ne).unwrap().len(), "jpeg-ls"));
    }
    sizes.into_iter().min().unwrap()
}

fn competitiveness() -> Outcome {
    let mut rows = Vec::new();
    for i in 0..15u64 {
        let fraction = 0.005 + 0.003 * i as f64;
        rows.push(("sparse", common::sparse_blob_image(&mut common::rng(1000 + i), 256, 256, fraction)));
    }
    for i in 0..15u64 {
        let noise = 5.0 + 2.5 * i as f64;
        rows.push(("two-region", common::two_region_image(&mut common::rng(2000 + i), 256, 256, noise)));
    }
    let mut within = 0;
    let mut two_region_smaller = true;
    let mut worst = 0f64;
    let mut two_region_worst = 0f64;
    for (family, r) in &rows {
        let bytes = encode(r, &cfg(Strategy::Auto)).map_err(|e| e.to_string())?;
        let (best, _) = best_backend(r);
        let ratio = bytes.len() as f64 / best as f64;
        worst = worst.max(ratio);
        within += (ratio <= 1.05) as usize;
        if *family == "two-region" {
            two_region_worst = two_region_worst.max(ratio);
            two_region_smaller &= bytes.len() < best;
        }
    }
    let share = within as f64 / rows.len() as f64;
    let msg = format!(
        "{within}/{} within 1.05x of the best backend (worst {worst:.3}x); two-region family worst {two_region_worst:.3}x",
        rows.len()
    );
    if share >= 0.9 && two_region_smaller {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn roi_integrity() -> Outcome {
    let background = if CodecId::LossyWavelet.available() { LossSpec::Ratio(30.0) } else { LossSpec::Mean };
    let mut checked = 0usize;
    let mut lossy_differs = 0;
    for seed in 0..10u64 {
        let r = common::two_region_image(&mut common::rng(3000 + seed), 128, 112, 30.0);
        let mask: Vec<u16> = r.pixels().iter().map(|&p| (p > 10000) as u16).collect();
        let template = Raster::new(r.width(), r.height(), 8, mask.clone()).unwrap();
        let loss = BTreeMap::from([(0, background), (1, LossSpec::Lossless)]);
        let strategy = [Strategy::Auto, Strategy::Binned, Strategy::Mixed][seed as usize % 3];
        let cfg = EncodeConfig { template: Some(template), loss, ..cfg(strategy) };
        let bytes = encode(&r, &cfg).map_err(|e| e.to_string())?;
        let d = decode_container(&bytes, &DecodeOptions::with_threads(2)).map_err(|e| e.to_string())?;
        let mut differs = false;
        for ((&a, &b), &l) in d.pixels().iter().zip(r.pixels()).zip(&mask) {
            if l == 1 {
                if a != b {
                    return Err(format!("seed {seed}: label-1 pixel differs"));
                }
                checked += 1;
            } else {
                differs |= a != b;
            }
        }
        lossy_differs += differs as usize;
    }
    Ok(format!(
        "{checked} label-1 pixels exact over 10 images (background {background:?}, lossy on {lossy_differs}/10)"
    ))
}

fn bin_extraction(encoded: &[Encoded]) -> Outcome {
    let mut containers = 0;
    let mut bins = 0;
    for e in encoded.iter().filter(|e| matches!(e.strategy, Strategy::Binned | Strategy::Mixed)) {
        let c = parse_container(&e.bytes, &DecodeLimits::default()).map_err(|err| format!("{}: {err}", e.name))?;
        let tol = read_tolerance(&c, 1).map_err(|err| format!("{}: {err}", e.name))?;
        for b in 0..c.bins.len() {
            let got = extract_bin(&e.bytes, b, &DecodeOptions::with_threads(1))
                .map_err(|err| format!("{} {} bin {b}: {err}", e.name, e.strategy))?;
            let ok = got
                .pixels()
                .iter()
                .zip(e.raster.pixels())
                .zip(tol.cells())
                .all(|((&g, &p), &t)| g == if t as usize == b { p } else { 0 });
            if !ok {
                return Err(format!("{} {} bin {b} differs", e.name, e.strategy));
            }
            bins += 1;
        }
        containers += 1;
    }
    Ok(format!("{bins} bins over {containers} binned/mixed containers match the restricted decode"))
}

fn fuzz_seeds() -> Vec<Vec<u8>> {
    let mut rg = common::rng(77);
    let blobs = common::blobs_raster(&mut rg, 64, 48);
    let two = common::two_region_image(&mut rg, 64, 64, 20.0);
    let mask = Raster::new(64, 64, 8, two.pixels().iter().map(|&p| (p > 10000) as u16).collect()).unwrap();
    let mut seeds: Vec<Vec<u8>> = STRATEGIES.iter().map(|&s| encode(&blobs, &cfg(s)).unwrap()).collect();
    seeds.push(encode(&blobs, &EncodeConfig { novis: true, slowest: true, ..cfg(Strategy::Auto) }).unwrap());
    seeds.push(encode(&Raster::filled(16, 16, 16, 9).unwrap(), &cfg(Strategy::Binned)).unwrap());
    for bg in [LossSpec::Ratio(20.0), LossSpec::Mean] {
        let loss = BTreeMap::from([(0, bg), (1, LossSpec::Lossless)]);
        let c = EncodeConfig { template: Some(mask.clone()), loss, ..cfg(Strategy::Binned) };
        seeds.push(encode(&two, &c).unwrap());
    }
    seeds
}

fn fuzz() -> Outcome {
    const LIMIT: usize = 64 << 20;
    let seeds = fuzz_seeds();
    let mut rg = common::rng(0xF0);
    let mut peak = 0;
    let mut accepted = 0;
    for i in 0..10_000 {
        let mut b = seeds[i % seeds.len()].clone();
        match rg.gen_range(0..5) {
            0 => {
                for _ in 0..rg.gen_range(1..=8) {
                    let at = rg.gen_range(0..b.len());
                    b[at] ^= rg.gen_range(1..=255u8);
                }
            }
            1 => b.truncate(rg.gen_range(0..b.len())),
            2 => {
                let at = rg.gen_range(0..b.len().saturating_sub(8).max(1));
                let v: u64 = if rg.gen_bool(0.5) { u64::MAX - rg.gen_range(0..4) } else { rg.gen() };
                let n = 8.min(b.len() - at);
                let old = b[at..at + n].to_vec();
                b[at..at + n].copy_from_slice(&v.to_le_bytes()[..n]);
                if b[at..at + n] == old[..] {
                    b[at] ^= 1;
                }
            }
            3 => {
                let at = rg.gen_range(0..=b.len());
                let junk: Vec<u8> = (0..rg.gen_range(1..64)).map(|_| rg.gen()).collect();
                b.splice(at..at, junk);
            }
            _ => {
                let other = &seeds[rg.gen_range(0..seeds.len())];
                let cut = rg.gen_range(0..b.len().min(other.len()));
                b.truncate(cut);
                b.extend_from_slice(&other[cut..]);
                if b == seeds[i % seeds.len()] || seeds.contains(&b) {
                    b.push(0);
                }
            }
        }
        let base = LIVE.load(Ordering::Relaxed);
        PEAK.store(base, Ordering::Relaxed);
        let opts = DecodeOptions::with_threads(1);
        let res = catch_unwind(AssertUnwindSafe(|| {
            let full = decode_container(&b, &opts).is_ok();
            let bin = extract_bin(&b, rg.gen_range(0..3), &opts).is_ok();
            full || bin
        }));
        peak = peak.max(PEAK.load(Ordering::Relaxed).saturating_sub(base));
        match res {
            Err(_) => return Err(format!("mutation {i} panicked")),
            Ok(true) => accepted += 1,
            Ok(false) => {}
        }
    }
    let msg = format!("10000 mutations: 0 panics, {accepted} accepted, peak decode allocation {} KiB", peak >> 10);
    if accepted == 0 && peak <= LIMIT {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let mut encoded = Vec::new();
    let regions = region_corpus();
    let results = [
        check("lossless round trip", || round_trip(&mut encoded)),
        check("pixel-perfect contouring", || pixel_perfect(&regions)),
        check("vertex economy", || vertex_economy(&regions)),
        check("optimizer monotone and idempotent", || optimizer_laws(&regions)),
        check("sign-bit codec", sign_bit),
        check("minimum region size", min_size),
        check("thread invariance", || thread_invariance(&encoded)),
        check("competitiveness", competitiveness),
        check("roi integrity", roi_integrity),
        check("bin extraction", || bin_extraction(&encoded)),
        check("fuzz robustness", fuzz),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
