mod common;

use agcr::codec::backend::CodecId;
use agcr::contour::{extract_regions, label_components, optimize_contour, trace_contour, GeometricContour, Vertex};
use agcr::decode::paint_shapes;
use agcr::region_store::*;
use agcr::threshold::ToleranceRaster;
use proptest::prelude::*;
use rand::Rng;

fn records_of(tol: &ToleranceRaster) -> Vec<RegionRecord> {
    extract_regions(tol)
        .iter()
        .map(|r| RegionRecord::new(r, optimize_contour(&trace_contour(r).unwrap(), r)))
        .collect()
}

fn paint(set: &ShapeSet, w: u32, h: u32) -> ToleranceRaster {
    let shapes: Vec<_> = set.shapes.iter().map(|s| (&s.contour, s.tolerance)).collect();
    paint_shapes(w, h, set.background, &shapes, 1).unwrap()
}

fn leb128(bytes: &[u8]) -> Vec<u64> {
    let mut out = Vec::new();
    let (mut v, mut shift) = (0u64, 0);
    for &b in bytes {
        v |= ((b & 0x7f) as u64) << shift;
        shift += 7;
        if b & 0x80 == 0 {
            out.push(v);
            v = 0;
            shift = 0;
        }
    }
    out
}

/// The four raw blocks of a stream written with the stored codec.
fn raw_blocks(stream: &[u8]) -> Vec<Vec<u64>> {
    let mut at = 5;
    let mut out = Vec::new();
    for _ in 0..4 {
        assert_eq!(stream[at], 0, "stored codec id");
        let raw = u64::from_le_bytes(stream[at + 1..at + 9].try_into().unwrap()) as usize;
        let len = u64::from_le_bytes(stream[at + 9..at + 17].try_into().unwrap()) as usize;
        assert_eq!(raw, len);
        out.push(leb128(&stream[at + 17..at + 17 + len]));
        at += 17 + len;
    }
    assert_eq!(at, stream.len());
    out
}

fn square(x: i32, y: i32, s: i32) -> GeometricContour {
    GeometricContour {
        outer: vec![
            Vertex::new(x, y),
            Vertex::new(x + s, y),
            Vertex::new(x + s, y + s),
            Vertex::new(x, y + s),
        ],
        holes: vec![],
    }
}

#[test]
fn signbit_exhaustive() {
    assert_eq!(signbit_encode(3), 6);
    assert_eq!(signbit_encode(-3), 7);
    assert_eq!(signbit_encode(0), 0);
    for d in -1_000_000i64..=1_000_000 {
        let e = signbit_encode(d);
        assert_eq!(e, d.unsigned_abs() * 2 + (d < 0) as u64);
        assert_eq!(signbit_decode(e), d);
    }
}

#[test]
fn minimum_sizes() {
    assert_eq!(min_region_size(1000, 1000), 32);
    assert_eq!(min_region_size(4096, 4096), 67);
    assert_eq!(min_region_size(2896, 2896), 33);
}

#[test]
fn blob_on_background_stores_only_the_blob() {
    let tol = common::tolerance_from(
        40,
        30,
        (0..1200)
            .map(|i| {
                let (x, y) = (i % 40, i / 40);
                ((x - 20) * (x - 20) + (y - 14) * (y - 14) <= 64) as u8
            })
            .collect(),
    );
    let out = sort_and_prune(records_of(&tol), &tol, 32, 0, 1).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].tolerance, 1);
    assert_eq!((out.eliminated, out.restored), (1, 0));
    let set = ShapeSet { background: 0, shapes: out.records.iter().map(StoredShape::from).collect() };
    let back = deserialize_regions(&serialize_regions(&set, &[CodecId::Stored]).unwrap(), &StreamLimits::default()).unwrap();
    assert_eq!(back, set);
    assert_eq!(paint(&back, 40, 30), tol);
}

#[test]
fn island_inside_a_hole_needs_no_restore() {
    // A ring of tolerance 1 around an island of tolerance 0, inside a
    // tolerance-2 field.
    let tol = common::tolerance_from(
        30,
        30,
        (0..900i32)
            .map(|i| {
                let d = (i % 30 - 15).abs().max((i / 30 - 15).abs());
                match d {
                    0..=3 => 0,
                    4..=9 => 1,
                    _ => 2,
                }
            })
            .collect(),
    );
    let out = sort_and_prune(records_of(&tol), &tol, 32, 0, 1).unwrap();
    let set = ShapeSet { background: 0, shapes: out.records.iter().map(StoredShape::from).collect() };
    assert_eq!(paint(&set, 30, 30), tol);
    // The island sits inside the tolerance-1 ring's hole, so dropping it
    // is already exact; nothing should be restored.
    assert_eq!(out.restored, 0);
    assert_eq!(out.records.len(), 2);
}

#[test]
fn sorting_is_by_area_then_position() {
    let tol = common::tolerance_from(
        12,
        4,
        (0..48)
            .map(|i| {
                let x = i % 12;
                match x {
                    0..=3 => 1,
                    4..=5 => 0,
                    6..=9 => 2,
                    _ => 3,
                }
            })
            .collect(),
    );
    let mut recs = records_of(&tol);
    sort_regions(&mut recs);
    let order: Vec<(usize, u32)> = recs.iter().map(|r| (r.area, r.bbox.x)).collect();
    assert_eq!(order, vec![(16, 0), (16, 6), (8, 4), (8, 10)]);
}

#[test]
fn identical_squares_share_a_dictionary_entry() {
    let set = ShapeSet {
        background: 0,
        shapes: vec![
            StoredShape { contour: square(2, 3, 4), tolerance: 1 },
            StoredShape { contour: square(20, 11, 4), tolerance: 2 },
        ],
    };
    let stream = serialize_regions(&set, &[CodecId::Stored]).unwrap();
    let blocks = raw_blocks(&stream);
    // Hole count and size per ring; the second ring is 0 then index 0.
    assert_eq!(blocks[0], vec![0, 4, 0, 0, 0]);
    assert_eq!(blocks[1], vec![1, 2]);
    // Corner delta, four offsets, corner delta.
    assert_eq!(blocks[2].len(), 6);
    assert_eq!(blocks[3].len(), 6);
    assert_eq!(blocks[2][5], signbit_encode(18));
    assert_eq!(blocks[3][5], signbit_encode(8));
    assert_eq!(stored_ring_count(&set), 1);
    assert_eq!(deserialize_regions(&stream, &StreamLimits::default()).unwrap(), set);
}

#[test]
fn corner_moves_backwards_use_the_sign_bit() {
    let set = ShapeSet {
        background: 3,
        shapes: vec![
            StoredShape { contour: square(30, 30, 2), tolerance: 0 },
            StoredShape { contour: square(5, 40, 3), tolerance: 0 },
        ],
    };
    let blocks = raw_blocks(&serialize_regions(&set, &[CodecId::Stored]).unwrap());
    assert_eq!(blocks[2][0], signbit_encode(30));
    assert_eq!(blocks[2][5], signbit_encode(-25));
    assert_eq!(blocks[2][5], 51);
}

#[test]
fn empty_list_round_trips() {
    let set = ShapeSet::default();
    for codecs in [vec![CodecId::Stored], CodecId::GENERAL.to_vec()] {
        let s = serialize_regions(&set, &codecs).unwrap();
        assert_eq!(deserialize_regions(&s, &StreamLimits::default()).unwrap(), set);
    }
}

#[test]
fn limits_are_enforced() {
    let set = ShapeSet { background: 0, shapes: vec![StoredShape { contour: square(0, 0, 9), tolerance: 1 }] };
    let s = serialize_regions(&set, &[CodecId::Stored]).unwrap();
    let tight = StreamLimits { max_block_bytes: 1 << 20, max_vertices: 3 };
    assert!(deserialize_regions(&s, &tight).is_err());
    let small = StreamLimits { max_block_bytes: 1, max_vertices: 100 };
    assert!(deserialize_regions(&s, &small).is_err());
    let mut trailing = s.clone();
    trailing.push(0);
    assert!(deserialize_regions(&trailing, &StreamLimits::default()).is_err());
}

#[test]
fn relabelled_rasters_have_no_small_regions() {
    for seed in 0..40 {
        let mut rg = common::rng(seed);
        let (w, h) = (rg.gen_range(8..60), rg.gen_range(8..60));
        let cells: Vec<u8> = (0..w * h).map(|_| rg.gen_range(0..3)).collect();
        let tol = common::tolerance_from(w, h, cells);
        let out = relabel_small_regions(&tol, 32);
        let (_, sizes) = label_components(&out);
        assert!(sizes.len() == 1 || sizes.iter().all(|&s| s >= 32), "seed {seed}: {sizes:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fifty_regions_round_trip(seed in any::<u64>()) {
        let mut rg = common::rng(seed);
        let mut shapes = Vec::new();
        for _ in 0..50 {
            let px = common::random_region(&mut rg, 24);
            let (dx, dy) = (rg.gen_range(0..500u32), rg.gen_range(0..500u32));
            let moved: common::PixelSet = px.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
            let region = common::region_of(&moved);
            let contour = optimize_contour(&trace_contour(&region).unwrap(), &region);
            shapes.push(StoredShape { contour, tolerance: rg.gen() });
        }
        let set = ShapeSet { background: rg.gen(), shapes };
        let codecs: &[CodecId] = if seed % 2 == 0 { &[CodecId::Stored] } else { &CodecId::GENERAL };
        let stream = serialize_regions(&set, codecs).unwrap();
        prop_assert_eq!(deserialize_regions(&stream, &StreamLimits::default()).unwrap(), set);
    }

    #[test]
    fn pruned_shapes_repaint_the_raster(seed in any::<u64>(), k in 1u8..5, slowest: bool) {
        let mut rg = common::rng(seed);
        let (w, h) = (rg.gen_range(4..48), rg.gen_range(4..48));
        let cells: Vec<u8> = (0..w * h).map(|i| {
            let (x, y) = (i % w, i / w);
            ((x / rg.gen_range(3..9) + y / 5) % k as u32) as u8
        }).collect();
        let tol = relabel_small_regions(&common::tolerance_from(w, h, cells), 6);
        let recs = records_of(&tol);
        let out = if slowest {
            prune_best_background(&recs, &tol, 6, 2).unwrap()
        } else {
            sort_and_prune(recs, &tol, 6, 0, 2).unwrap()
        };
        let set = ShapeSet { background: out.background, shapes: out.records.iter().map(StoredShape::from).collect() };
        let back = deserialize_regions(&serialize_regions(&set, &[CodecId::Stored, CodecId::GeneralLz]).unwrap(), &StreamLimits::default()).unwrap();
        prop_assert_eq!(paint(&back, w, h), tol);
        for pair in out.records.windows(2) {
            prop_assert!(pair[0].area >= pair[1].area);
        }
    }
}
