//! Histogram packing, k-level binning, Otsu floor, Gaussian blur and the
//! tolerance raster.

use crate::contour::count_regions;
use crate::error::{corrupt, Error, Result};
use crate::raster_io::{depth_for_max, gini_from_histogram, Raster};

/// Rank transform over the intensities that actually occur.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackingTransform {
    distinct_values: Vec<u16>,
    bit_depth: u8,
}

impl PackingTransform {
    pub fn new(distinct_values: Vec<u16>, bit_depth: u8) -> Result<Self> {
        if distinct_values.is_empty() {
            return Err(Error::InvalidRaster("empty packing table".into()));
        }
        if !distinct_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidRaster("packing table not strictly increasing".into()));
        }
        if !(1..=16).contains(&bit_depth)
            || *distinct_values.last().unwrap() as u32 >= 1u32 << bit_depth
        {
            return Err(Error::InvalidRaster("packing table exceeds bit depth".into()));
        }
        Ok(PackingTransform {
            distinct_values,
            bit_depth,
        })
    }

    /// 0..=max_value mapped onto itself.
    pub fn identity(max_value: u16, bit_depth: u8) -> Self {
        PackingTransform {
            distinct_values: (0..=max_value).collect(),
            bit_depth,
        }
    }

    pub fn distinct_values(&self) -> &[u16] {
        &self.distinct_values
    }

    /// N', the number of distinct intensities.
    pub fn len(&self) -> usize {
        self.distinct_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct_values.is_empty()
    }

    /// Depth of the original samples.
    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn packed_depth(&self) -> u8 {
        depth_for_max(self.len() as u32 - 1)
    }

    pub fn is_identity(&self) -> bool {
        self.distinct_values
            .iter()
            .enumerate()
            .all(|(i, &v)| i == v as usize)
    }

    pub fn pack(&self, v: u16) -> Option<u16> {
        self.distinct_values.binary_search(&v).ok().map(|i| i as u16)
    }

    pub fn unpack(&self, packed: u16) -> Option<u16> {
        self.distinct_values.get(packed as usize).copied()
    }

    /// Packed index of the first appearing value >= v.
    pub fn pack_ceil(&self, v: u16) -> u32 {
        self.distinct_values.partition_point(|&d| d < v) as u32
    }
}

pub fn histogram_pack(r: &Raster) -> (Raster, PackingTransform) {
    let mut seen = vec![false; 1 << 16];
    for &p in r.pixels() {
        seen[p as usize] = true;
    }
    let mut lut = vec![0u16; 1 << 16];
    let mut distinct = Vec::new();
    for (v, &s) in seen.iter().enumerate() {
        if s {
            lut[v] = distinct.len() as u16;
            distinct.push(v as u16);
        }
    }
    let t = PackingTransform {
        distinct_values: distinct,
        bit_depth: r.bit_depth(),
    };
    let pixels = r.pixels().iter().map(|&p| lut[p as usize]).collect();
    let packed = Raster::new(r.width(), r.height(), t.packed_depth(), pixels)
        .expect("packed ranks fit the packed depth");
    (packed, t)
}

pub fn histogram_unpack(packed: &Raster, t: &PackingTransform) -> Result<Raster> {
    let mut out = Vec::with_capacity(packed.len());
    for (i, &p) in packed.pixels().iter().enumerate() {
        match t.unpack(p) {
            Some(v) => out.push(v),
            None => {
                return Err(corrupt(
                    i,
                    format!("packed value {p} outside table of {}", t.len()),
                ))
            }
        }
    }
    Raster::new(packed.width(), packed.height(), t.bit_depth(), out)
}

/// Counts per packed value, length `n_values`.
pub fn packed_histogram(packed: &Raster, n_values: usize) -> Vec<u64> {
    let mut hist = vec![0u64; n_values.max(1)];
    for &p in packed.pixels() {
        hist[p as usize] += 1;
    }
    hist
}

/// Inclusive packed-intensity range with its pixel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bin {
    pub lo: u32,
    pub hi: u32,
    pub count: u64,
}

impl Bin {
    pub fn span(&self) -> u32 {
        self.hi - self.lo + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinOptions {
    /// Ranges spanning fewer than 2^min_bin_bits values are not split.
    pub min_bin_bits: u32,
    /// Upper bound on the minimum bin probability.
    pub probability_cap: f64,
    /// Tolerance indices are stored in a byte.
    pub max_bins: usize,
}

impl Default for BinOptions {
    fn default() -> Self {
        BinOptions {
            min_bin_bits: 2,
            probability_cap: 0.25,
            max_bins: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdPlan {
    bins: Vec<Bin>,
    floor: Option<u32>,
    total: u64,
    min_probability: f64,
}

impl ThresholdPlan {
    /// Plan over explicit bins; they must tile 0..=last.hi.
    pub fn from_bins(bins: Vec<Bin>, floor: Option<u32>, min_probability: f64) -> Result<Self> {
        if bins.is_empty() || bins[0].lo != 0 {
            return Err(Error::Config("bins must start at packed value 0".into()));
        }
        for w in bins.windows(2) {
            if w[1].lo != w[0].hi + 1 {
                return Err(Error::Config("bins must be contiguous".into()));
            }
        }
        if bins.iter().any(|b| b.hi < b.lo) {
            return Err(Error::Config("inverted bin range".into()));
        }
        let total = bins.iter().map(|b| b.count).sum();
        Ok(ThresholdPlan {
            bins,
            floor,
            total,
            min_probability,
        })
    }

    pub fn k(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn floor(&self) -> Option<u32> {
        self.floor
    }

    pub fn min_probability(&self) -> f64 {
        self.min_probability
    }

    pub fn n_values(&self) -> u32 {
        self.bins.last().map(|b| b.hi + 1).unwrap_or(0)
    }

    pub fn probability(&self, i: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.bins[i].count as f64 / self.total as f64
        }
    }

    /// Tolerance index of a packed value.
    pub fn bin_of(&self, packed: u32) -> usize {
        self.bins
            .partition_point(|b| b.hi < packed)
            .min(self.bins.len() - 1)
    }

    /// Original-intensity upper edge of every bin but the last.
    pub fn cutpoints(&self, t: &PackingTransform) -> Vec<u16> {
        self.bins[..self.bins.len() - 1]
            .iter()
            .map(|b| t.unpack(b.hi as u16).unwrap_or(u16::MAX))
            .collect()
    }

    fn merge_pair(&mut self, left: usize) {
        let right = self.bins.remove(left + 1);
        let b = &mut self.bins[left];
        b.hi = right.hi;
        b.count += right.count;
    }

    /// Merges the adjacent pair with the smallest combined mass (or splits the
    /// widest bin at its midpoint) until exactly `k` bins remain.
    pub fn with_bin_count(&self, hist: &[u64], k: usize) -> ThresholdPlan {
        let k = k.clamp(1, self.n_values().max(1) as usize);
        let mut plan = self.clone();
        while plan.k() > k {
            let left = (0..plan.k() - 1)
                .min_by_key(|&i| plan.bins[i].count + plan.bins[i + 1].count)
                .unwrap();
            plan.merge_pair(left);
        }
        while plan.k() < k {
            let i = (0..plan.k())
                .max_by_key(|&i| (plan.bins[i].span(), std::cmp::Reverse(i)))
                .unwrap();
            let b = plan.bins[i];
            if b.span() < 2 {
                break;
            }
            let mid = b.lo + b.span() / 2;
            let lower = Bin {
                lo: b.lo,
                hi: mid - 1,
                count: range_count(hist, b.lo, mid - 1),
            };
            let upper = Bin {
                lo: mid,
                hi: b.hi,
                count: range_count(hist, mid, b.hi),
            };
            plan.bins[i] = lower;
            plan.bins.insert(i + 1, upper);
        }
        plan
    }
}

fn range_count(hist: &[u64], lo: u32, hi: u32) -> u64 {
    let hi = (hi as usize).min(hist.len().saturating_sub(1));
    if (lo as usize) > hi {
        return 0;
    }
    hist[lo as usize..=hi].iter().sum()
}

fn subdivide(lo: u32, hi: u32, min_span: u32, out: &mut Vec<(u32, u32)>) {
    let span = hi - lo + 1;
    if span < min_span || span < 2 {
        out.push((lo, hi));
        return;
    }
    let mid = lo + span / 2;
    subdivide(lo, mid - 1, min_span, out);
    subdivide(mid, hi, min_span, out);
}

pub fn build_bins(packed_hist: &[u64], g: f64, floor: Option<u32>) -> ThresholdPlan {
    build_bins_with(packed_hist, g, floor, &BinOptions::default())
}

pub fn build_bins_with(
    packed_hist: &[u64],
    g: f64,
    floor: Option<u32>,
    opts: &BinOptions,
) -> ThresholdPlan {
    let n_values = packed_hist.len().max(1) as u32;
    let total: u64 = packed_hist.iter().sum();
    let min_probability = (1.0 - g).clamp(0.0, 1.0).min(opts.probability_cap);
    let min_span = 1u32 << opts.min_bin_bits.min(16);

    let mut leaves = Vec::new();
    subdivide(0, n_values - 1, min_span, &mut leaves);
    let mut leaves: Vec<Bin> = leaves
        .into_iter()
        .map(|(lo, hi)| Bin {
            lo,
            hi,
            count: range_count(packed_hist, lo, hi),
        })
        .collect();

    let mut bins: Vec<Bin> = Vec::new();
    let mut floor_bin = false;
    if let Some(f) = floor.filter(|&f| f > 0 && f < n_values) {
        // The floor bin is exactly [0, f); a leaf straddling f keeps its top.
        let below = leaves.iter().take_while(|b| b.lo < f).count();
        bins.push(Bin {
            lo: 0,
            hi: f - 1,
            count: range_count(packed_hist, 0, f - 1),
        });
        let straddle = leaves[below - 1];
        leaves.drain(..below);
        if straddle.hi >= f {
            leaves.insert(
                0,
                Bin {
                    lo: f,
                    hi: straddle.hi,
                    count: range_count(packed_hist, f, straddle.hi),
                },
            );
        }
        floor_bin = true;
    }

    let meets = |count: u64| total == 0 || count as f64 / total as f64 >= min_probability;
    let mut pending: Option<Bin> = None;
    for leaf in leaves {
        let cur = match pending.take() {
            Some(p) => Bin {
                lo: p.lo,
                hi: leaf.hi,
                count: p.count + leaf.count,
            },
            None => leaf,
        };
        if meets(cur.count) {
            bins.push(cur);
        } else {
            pending = Some(cur);
        }
    }
    if let Some(tail) = pending {
        match bins.last_mut() {
            Some(prev) => {
                prev.hi = tail.hi;
                prev.count += tail.count;
            }
            None => bins.push(tail),
        }
    }

    let mut plan = ThresholdPlan {
        bins,
        floor: if floor_bin { floor } else { None },
        total,
        min_probability,
    };
    if plan.k() > opts.max_bins {
        plan = plan.with_bin_count(packed_hist, opts.max_bins);
    }
    plan
}

/// Classic Otsu on a histogram; returns the lowest value of the upper class.
/// Among (near-)equal maxima the lowest threshold wins.
pub fn otsu_floor(hist: &[u64]) -> Result<u32> {
    let n: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::NoThreshold);
    }
    let total_sum: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let mut n0 = 0u64;
    let mut s0 = 0f64;
    let mut best: Option<(u32, f64)> = None;
    for t in 1..hist.len() {
        n0 += hist[t - 1];
        s0 += (t - 1) as f64 * hist[t - 1] as f64;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let mu0 = s0 / n0 as f64;
        let mu1 = (total_sum - s0) / n1 as f64;
        let score = n0 as f64 * n1 as f64 * (mu0 - mu1) * (mu0 - mu1);
        match best {
            Some((_, b)) if score <= b * (1.0 + 1e-12) => {}
            _ => best = Some((t as u32, score)),
        }
    }
    best.map(|(t, _)| t).ok_or(Error::NoThreshold)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Separable Gaussian, clamp-to-edge, rounded back to the raster's depth.
pub fn gaussian_blur(r: &Raster, sigma: f64) -> Raster {
    if sigma <= 0.0 || !sigma.is_finite() {
        return r.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (r.width() as i64, r.height() as i64);
    let src = r.pixels();

    let mut tmp = vec![0f64; src.len()];
    for y in 0..h {
        let row = &src[(y * w) as usize..((y + 1) * w) as usize];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kw) in kernel.iter().enumerate() {
                let xx = (x + j as i64 - radius).clamp(0, w - 1);
                acc += kw * row[xx as usize] as f64;
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let max = r.max_value() as f64;
    let mut out = vec![0u16; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kw) in kernel.iter().enumerate() {
                let yy = (y + j as i64 - radius).clamp(0, h - 1);
                acc += kw * tmp[(yy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc.round().clamp(0.0, max) as u16;
        }
    }
    Raster::new(r.width(), r.height(), r.bit_depth(), out).expect("clamped to depth")
}

/// Per-pixel tolerance indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToleranceRaster {
    width: u32,
    height: u32,
    cells: Vec<u8>,
}

impl ToleranceRaster {
    pub fn new(width: u32, height: u32, cells: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || cells.len() as u64 != width as u64 * height as u64 {
            return Err(Error::InvalidRaster("tolerance raster shape".into()));
        }
        Ok(ToleranceRaster {
            width,
            height,
            cells,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        ToleranceRaster {
            width,
            height,
            cells: vec![0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [u8] {
        &mut self.cells
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.cells[y as usize * self.width as usize + x as usize]
    }

    /// One more than the largest index present.
    pub fn k(&self) -> usize {
        self.cells.iter().copied().max().map(|m| m as usize + 1).unwrap_or(1)
    }
}

pub fn tolerance_raster(
    packed: &Raster,
    plan: &ThresholdPlan,
    template: Option<&Raster>,
) -> Result<ToleranceRaster> {
    match template {
        Some(t) => template_labels(t, packed.width(), packed.height()),
        None => {
            let cells = packed
                .pixels()
                .iter()
                .map(|&p| plan.bin_of(p as u32) as u8)
                .collect();
            ToleranceRaster::new(packed.width(), packed.height(), cells)
        }
    }
}

/// Validates a label mask and returns it verbatim as tolerance indices.
pub fn template_labels(template: &Raster, width: u32, height: u32) -> Result<ToleranceRaster> {
    if template.width() != width || template.height() != height {
        return Err(Error::Template(format!(
            "template is {}x{}, image is {width}x{height}",
            template.width(),
            template.height()
        )));
    }
    if let Some(&l) = template.pixels().iter().find(|&&l| l > 255) {
        return Err(Error::Template(format!("label {l} exceeds 255")));
    }
    let cells = template.pixels().iter().map(|&l| l as u8).collect();
    ToleranceRaster::new(width, height, cells)
}

/// Bins original-space (possibly blurred) intensities by the plan's cutpoints.
pub fn classify(r: &Raster, cutpoints: &[u16]) -> ToleranceRaster {
    let cells = r
        .pixels()
        .iter()
        .map(|&v| cutpoints.partition_point(|&c| c < v) as u8)
        .collect();
    ToleranceRaster {
        width: r.width(),
        height: r.height(),
        cells,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FloorMode {
    /// Otsu when the dynamic range is narrow or the histogram very unequal.
    Auto,
    Disabled,
    /// Original intensity; converted to the first packed value at or above it.
    Value(u16),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub bins: Option<usize>,
    pub sigma: Option<f64>,
    pub floor: FloorMode,
    pub bin_options: BinOptions,
    pub otsu_max_dynamic_range: u32,
    pub otsu_min_gini: f64,
    pub sigma_step: f64,
    pub max_sigma_steps: u32,
    pub regions_per_bin: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            bins: None,
            sigma: None,
            floor: FloorMode::Auto,
            bin_options: BinOptions::default(),
            otsu_max_dynamic_range: 256,
            otsu_min_gini: 0.95,
            sigma_step: 5.0,
            max_sigma_steps: 10,
            regions_per_bin: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub plan: ThresholdPlan,
    pub sigma: f64,
    pub transform: PackingTransform,
    pub packed: Raster,
    pub tolerance: ToleranceRaster,
    pub region_count: usize,
    pub gini: f64,
    /// (sigma, region count) for every sigma evaluated, in order.
    pub sigma_trace: Vec<(f64, usize)>,
}

/// Drops bins while any bin falls short of its coverage, always merging
/// the least probable offender into its lighter neighbour.
pub fn reduce_by_coverage(plan: &ThresholdPlan, g: f64) -> ThresholdPlan {
    let mut plan = plan.clone();
    let inv = (1.0 - g).clamp(0.0, 1.0);
    let n_values = plan.n_values().max(1) as f64;
    loop {
        if plan.k() <= 1 {
            return plan;
        }
        let worst = (0..plan.k())
            .filter(|&i| {
                let coverage = inv * plan.bins[i].span() as f64 / n_values;
                plan.probability(i) < coverage.min(inv)
            })
            .min_by(|&a, &b| plan.bins[a].count.cmp(&plan.bins[b].count).then(a.cmp(&b)));
        let Some(i) = worst else { return plan };
        let left = if i == 0 {
            0
        } else if i == plan.k() - 1 || plan.bins[i - 1].count <= plan.bins[i + 1].count {
            i - 1
        } else {
            i
        };
        plan.merge_pair(left);
    }
}

pub fn auto_tune(r: &Raster, config: &TuneConfig) -> TuneResult {
    let (packed, transform) = histogram_pack(r);
    let hist = packed_histogram(&packed, transform.len());
    let gini = gini_from_histogram(&crate::raster_io::intensity_histogram(r));

    let floor = match config.floor {
        FloorMode::Disabled => None,
        FloorMode::Value(v) => Some(transform.pack_ceil(v)),
        FloorMode::Auto => {
            let values = transform.distinct_values();
            let range = (values[values.len() - 1] - values[0]) as u32;
            if range < config.otsu_max_dynamic_range || gini > config.otsu_min_gini {
                otsu_floor(&hist).ok()
            } else {
                None
            }
        }
    };

    let mut plan = build_bins_with(&hist, gini, floor, &config.bin_options);
    plan = match config.bins {
        Some(k) => plan.with_bin_count(&hist, k.min(config.bin_options.max_bins)),
        None => reduce_by_coverage(&plan, gini),
    };

    let cut = plan.cutpoints(&transform);
    let bound = config.regions_per_bin * plan.k();
    let mut trace = Vec::new();
    let mut best: Option<(f64, ToleranceRaster, usize)> = None;

    let sigmas: Vec<f64> = match config.sigma {
        Some(s) => vec![s],
        None => (0..=config.max_sigma_steps)
            .map(|i| i as f64 * config.sigma_step)
            .collect(),
    };
    for sigma in sigmas {
        let tol = if sigma > 0.0 {
            classify(&gaussian_blur(r, sigma), &cut)
        } else {
            tolerance_raster(&packed, &plan, None).expect("same shape")
        };
        let regions = count_regions(&tol);
        trace.push((sigma, regions));
        let better = best.as_ref().map(|b| regions < b.2).unwrap_or(true);
        if better {
            best = Some((sigma, tol, regions));
        }
        if regions <= bound {
            break;
        }
    }
    let (sigma, tolerance, region_count) = best.expect("at least one sigma evaluated");
    TuneResult {
        plan,
        sigma,
        transform,
        packed,
        tolerance,
        region_count,
        gini,
        sigma_trace: trace,
    }
}
