//! Tile-level tissue occupancy and colour descriptors.
//!
//! Tissue detection is a brightness rule: a pixel is background when all
//! three channels exceed the background threshold. Descriptors are the
//! per-channel mean and population standard deviation of intensities
//! scaled by 1/255.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cohort::{Descriptor, PatchRecord};
use crate::error::{CrispError, Result};
use crate::par;

pub const DEFAULT_OCC_MIN: f64 = 0.70;
pub const DEFAULT_BG_THRESHOLD: u8 = 220;
pub const DEFAULT_TILE_SIZE: u32 = 256;

/// An 8-bit RGB tile, row-major, interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl PatchImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if width == 0 || height == 0 || pixels.len() != expected {
            return Err(CrispError::Image(format!(
                "{width}x{height} RGB tile needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(PatchImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        PatchImage { width, height, pixels }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        PatchImage { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| CrispError::Image(format!("{}: {e}", path.display())))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        PatchImage::new(w, h, rgb.into_raw())
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.pixels,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| CrispError::Image(format!("{}: {e}", path.display())))
    }
}

/// Fraction of tissue pixels.
pub fn occupancy(img: &PatchImage, bg_threshold: u8) -> f64 {
    let total = img.width as usize * img.height as usize;
    let tissue = img.pixels().filter(|p| p.iter().any(|&c| c <= bg_threshold)).count();
    tissue as f64 / total as f64
}

pub fn descriptor(img: &PatchImage) -> Descriptor {
    let n = (img.width as usize * img.height as usize) as f64;
    let mut sum = [0u64; 3];
    let mut sum_sq = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            let v = p[c] as u64;
            sum[c] += v;
            sum_sq[c] += v * v;
        }
    }
    let mut out = [0.0; 6];
    for c in 0..3 {
        // Integer sums keep the variance exact before scaling.
        let mean = sum[c] as f64 / n;
        let var = (sum_sq[c] as f64 / n - mean * mean).max(0.0);
        out[c] = mean / 255.0;
        out[c + 3] = var.sqrt() / 255.0;
    }
    out
}

/// A tile together with its grid position.
#[derive(Clone, Debug)]
pub struct GridTile {
    pub grid_x: u32,
    pub grid_y: u32,
    pub image: PatchImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub records: Vec<PatchRecord>,
    pub discarded: usize,
}

/// Keeps tiles whose occupancy is at least `occ_min`, in raster order.
pub fn filter_and_describe(
    slide_id: &str,
    tiles: &[GridTile],
    occ_min: f64,
    bg_threshold: u8,
) -> Result<FilterOutcome> {
    if !(0.0..=1.0).contains(&occ_min) {
        return Err(CrispError::InvalidConfig(vec![format!(
            "occ_min = {occ_min} must lie in [0, 1]"
        )]));
    }
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    order.sort_by_key(|&i| (tiles[i].grid_y, tiles[i].grid_x));
    for w in order.windows(2) {
        let (a, b) = (&tiles[w[0]], &tiles[w[1]]);
        if (a.grid_x, a.grid_y) == (b.grid_x, b.grid_y) {
            return Err(CrispError::Duplicate {
                kind: "grid cell",
                id: format!("{slide_id}:{}:{}", a.grid_x, a.grid_y),
            });
        }
    }

    let described = par::map(&order, |&i| {
        let t = &tiles[i];
        let occ = occupancy(&t.image, bg_threshold);
        (occ >= occ_min).then(|| PatchRecord::new(slide_id, t.grid_x, t.grid_y, occ, descriptor(&t.image)))
    });
    let records: Vec<PatchRecord> = described.into_iter().flatten().collect();
    let discarded = tiles.len() - records.len();
    if records.is_empty() && !tiles.is_empty() {
        log::warn!(
            "slide {slide_id}: all {} tiles fell below occupancy {occ_min}",
            tiles.len()
        );
    }
    Ok(FilterOutcome { records, discarded })
}

/// Parses `<slide_id>__<grid_x>_<grid_y>.png`.
pub fn parse_tile_name(name: &str) -> Option<(String, u32, u32)> {
    let stem = name.strip_suffix(".png")?;
    let (slide, coords) = stem.rsplit_once("__")?;
    let (x, y) = coords.split_once('_')?;
    if slide.is_empty() {
        return None;
    }
    Some((slide.to_string(), x.parse().ok()?, y.parse().ok()?))
}

/// Grid position and file of one tile.
pub type TilePath = (u32, u32, PathBuf);

/// Scans a directory of tile PNGs, grouped by slide id.
pub fn scan_tile_dir(dir: &Path) -> Result<BTreeMap<String, Vec<TilePath>>> {
    let mut slides: BTreeMap<String, Vec<TilePath>> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CrispError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CrispError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        match parse_tile_name(name) {
            Some((slide, x, y)) => slides.entry(slide).or_default().push((x, y, entry.path())),
            None => log::debug!("skipping {name}: not a tile name"),
        }
    }
    Ok(slides)
}

/// Loads tiles from disk, checking they are `tile_size` square.
pub fn load_tiles(paths: &[TilePath], tile_size: u32) -> Result<Vec<GridTile>> {
    par::map(paths, |(x, y, path)| {
        let image = PatchImage::read_png(path)?;
        if image.width != tile_size || image.height != tile_size {
            return Err(CrispError::Image(format!(
                "{}: {}x{} tile, expected {tile_size}x{tile_size}",
                path.display(),
                image.width,
                image.height
            )));
        }
        Ok(GridTile {
            grid_x: *x,
            grid_y: *y,
            image,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn occupancy_extremes() {
        assert_eq!(occupancy(&PatchImage::filled(8, 8, [255, 255, 255]), 220), 0.0);
        assert_eq!(occupancy(&PatchImage::filled(8, 8, [0, 0, 0]), 220), 1.0);
    }

    #[test]
    fn occupancy_half() {
        let img = PatchImage::from_fn(16, 16, |x, _| if x < 8 { [255, 255, 255] } else { [100, 50, 50] });
        assert_eq!(occupancy(&img, 220), 0.5);
    }

    #[test]
    fn occupancy_needs_all_channels_bright_for_background() {
        // One dark channel is enough to count as tissue.
        let img = PatchImage::filled(4, 4, [255, 255, 220]);
        assert_eq!(occupancy(&img, 220), 1.0);
        let img = PatchImage::filled(4, 4, [255, 255, 221]);
        assert_eq!(occupancy(&img, 220), 0.0);
    }

    #[test]
    fn descriptor_uniform_gray() {
        let d = descriptor(&PatchImage::filled(8, 8, [128, 128, 128]));
        for c in 0..3 {
            assert_abs_diff_eq!(d[c], 128.0 / 255.0, epsilon = 1e-12);
            assert_eq!(d[c + 3], 0.0);
        }
        assert_abs_diff_eq!(d[0], 0.50196, epsilon = 1e-5);
    }

    #[test]
    fn descriptor_checkerboard() {
        let img = PatchImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { [0, 0, 0] } else { [255, 255, 255] });
        let d = descriptor(&img);
        for v in d {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn descriptor_black() {
        assert_eq!(descriptor(&PatchImage::filled(4, 4, [0, 0, 0])), [0.0; 6]);
    }

    fn tile_with_occupancy(x: u32, y: u32, tissue_pixels: u32) -> GridTile {
        // 10x10 tile: the first `tissue_pixels` pixels are tissue.
        GridTile {
            grid_x: x,
            grid_y: y,
            image: PatchImage::from_fn(10, 10, |px, py| {
                if py * 10 + px < tissue_pixels {
                    [120, 60, 90]
                } else {
                    [250, 250, 250]
                }
            }),
        }
    }

    #[test]
    fn filter_threshold_and_raster_order() {
        let tiles = vec![
            tile_with_occupancy(1, 1, 90),
            tile_with_occupancy(0, 1, 50),
            tile_with_occupancy(1, 0, 71),
            tile_with_occupancy(0, 0, 69),
        ];
        let out = filter_and_describe("S", &tiles, 0.70, 220).unwrap();
        let ids: Vec<_> = out.records.iter().map(|r| r.patch_id.as_str()).collect();
        assert_eq!(ids, ["S:1:0", "S:1:1"]);
        assert_eq!(out.discarded, 2);

        let all = filter_and_describe("S", &tiles, 0.0, 220).unwrap();
        assert_eq!(all.records.len(), 4);
        let ids: Vec<_> = all.records.iter().map(|r| r.patch_id.as_str()).collect();
        assert_eq!(ids, ["S:0:0", "S:1:0", "S:0:1", "S:1:1"]);

        let none = filter_and_describe("S", &tiles, 1.0, 220).unwrap();
        assert!(none.records.is_empty());
        assert_eq!(none.discarded, 4);
    }

    #[test]
    fn filter_keeps_exact_boundary() {
        let tiles = vec![tile_with_occupancy(0, 0, 70)];
        let out = filter_and_describe("S", &tiles, 0.70, 220).unwrap();
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn filter_rejects_bad_occ_min_and_duplicates() {
        let tiles = vec![tile_with_occupancy(0, 0, 70), tile_with_occupancy(0, 0, 80)];
        assert!(filter_and_describe("S", &tiles[..1], 1.5, 220).is_err());
        assert!(matches!(
            filter_and_describe("S", &tiles, 0.5, 220),
            Err(CrispError::Duplicate { .. })
        ));
    }

    #[test]
    fn tile_names() {
        assert_eq!(parse_tile_name("slide_A__3_14.png"), Some(("slide_A".into(), 3, 14)));
        assert_eq!(parse_tile_name("a__b__1_2.png"), Some(("a__b".into(), 1, 2)));
        assert_eq!(parse_tile_name("x_1_2.png"), None);
        assert_eq!(parse_tile_name("x__1_2.jpg"), None);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("S__0_0.png");
        let img = PatchImage::from_fn(6, 6, |x, y| [(x * 40) as u8, (y * 40) as u8, 7]);
        img.write_png(&path).unwrap();
        assert_eq!(PatchImage::read_png(&path).unwrap(), img);
    }

    proptest! {
        #[test]
        fn descriptor_bounds_and_permutation_invariance(
            px in prop::collection::vec(any::<[u8; 3]>(), 16),
            perm in Just((0..16usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let flat: Vec<u8> = px.iter().flatten().copied().collect();
            let img = PatchImage::new(4, 4, flat).unwrap();
            let d = descriptor(&img);
            for c in 0..3 {
                prop_assert!((0.0..=1.0).contains(&d[c]));
                prop_assert!((0.0..=0.5).contains(&d[c + 3]));
            }
            let shuffled: Vec<u8> = perm.iter().flat_map(|&i| px[i]).collect();
            let d2 = descriptor(&PatchImage::new(4, 4, shuffled).unwrap());
            prop_assert_eq!(d, d2);
        }
    }
}
