//! Binary PPM (P6) rasters of plans.
//!
//! Channel rasters are grayscale: white for zero, darker for larger values,
//! `255 − round(255 · v / max)` with `max` the channel maximum. Merged maps
//! paint each cell with the palette colour of its dominant category, white
//! when the cell is empty. Every grid cell becomes an `s × s` pixel block.

use std::path::Path;

use crate::error::{Error, Result};
use crate::landuse::{CategoryMap, LandUseConfig};

pub const EMPTY_COLOR: [u8; 3] = [255, 255, 255];

/// Merged-map colours by category code 0..20.
pub const PALETTE: [[u8; 3]; 20] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
];

/// Encodes an RGB image given per-cell colours on an `n × n` grid.
pub fn encode_ppm(n: usize, scale: usize, color: impl Fn(usize, usize) -> [u8; 3]) -> Vec<u8> {
    let side = n * scale;
    let mut out = format!("P6\n{side} {side}\n255\n").into_bytes();
    out.reserve(side * side * 3);
    for py in 0..side {
        for px in 0..side {
            out.extend_from_slice(&color(py / scale, px / scale));
        }
    }
    out
}

pub fn channel_raster(cfg: &LandUseConfig, channel: usize, scale: usize) -> Vec<u8> {
    let n = cfg.resolution();
    let values = cfg.channel(channel);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    encode_ppm(n, scale, |r, c| {
        let v = values[r * n + c];
        let g = if max > 0.0 && v > 0.0 {
            (255.0 - (255.0 * v / max).round()).clamp(0.0, 255.0) as u8
        } else {
            255
        };
        [g, g, g]
    })
}

pub fn merged_raster(map: &CategoryMap, scale: usize) -> Vec<u8> {
    encode_ppm(map.n, scale, |r, c| match map.get(r, c) {
        Some(k) => PALETTE[k as usize % PALETTE.len()],
        None => EMPTY_COLOR,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landuse::merge_dominant;

    fn pixels(ppm: &[u8]) -> &[u8] {
        // Header is three newline-terminated lines.
        let mut seen = 0;
        let start = ppm
            .iter()
            .position(|&b| {
                if b == b'\n' {
                    seen += 1;
                }
                seen == 3
            })
            .unwrap();
        &ppm[start + 1..]
    }

    #[test]
    fn zero_tensor_is_white() {
        let cfg = LandUseConfig::zeros(3, 4);
        let img = channel_raster(&cfg, 1, 2);
        assert!(img.starts_with(b"P6\n8 8\n255\n"));
        assert!(pixels(&img).iter().all(|&b| b == 255));
    }

    #[test]
    fn single_hot_cell_is_one_block() {
        let mut cfg = LandUseConfig::zeros(1, 3);
        cfg.add(0, 1, 2, 4.0);
        let s = 3;
        let img = channel_raster(&cfg, 0, s);
        let px = pixels(&img);
        assert_eq!(px.len(), 9 * 9 * 3);
        let dark: Vec<usize> = (0..81).filter(|i| px[i * 3] == 0).collect();
        assert_eq!(dark.len(), s * s);
        for i in dark {
            let (y, x) = (i / 9, i % 9);
            assert_eq!((y / s, x / s), (1, 2));
        }
    }

    #[test]
    fn merged_uses_palette() {
        let mut cfg = LandUseConfig::zeros(20, 2);
        cfg.add(19, 0, 0, 1.0);
        cfg.add(3, 1, 1, 2.0);
        let img = merged_raster(&merge_dominant(&cfg), 1);
        let px = pixels(&img);
        assert_eq!(&px[0..3], &PALETTE[19]);
        assert_eq!(&px[3..6], &EMPTY_COLOR);
        assert_eq!(&px[9..12], &PALETTE[3]);
        let distinct: std::collections::HashSet<[u8; 3]> = PALETTE.iter().copied().collect();
        assert_eq!(distinct.len(), 20);
        assert!(!distinct.contains(&EMPTY_COLOR));
    }
}
