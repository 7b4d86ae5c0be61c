//! 8-bit grayscale rasters, binary masks, histograms and PGM/PNG file I/O.
//!
//! Pixels are stored row-major and addressed as `(x, y)` = (column, row) with
//! the origin at the top-left corner. Pixel `(x, y)` is centered on the
//! continuous coordinate `(x, y)` and covers `[x - 0.5, x + 0.5]`.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("unsupported magic at byte 0: {found:?}")]
    UnsupportedMagic { found: String },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("unsupported maxval {maxval} at byte {offset} (only 255 is supported)")]
    UnsupportedMaxval { offset: usize, maxval: u32 },
    #[error("truncated payload at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("png decode failed: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Single-channel 8-bit raster.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    /// Creates an image filled with `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::new(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    ///
    /// Panics if the window does not fit inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height && w > 0 && h > 0);
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage {
            width: w,
            height: h,
            pixels: out,
        }
    }

    /// `true` when every pixel of `self` is `<=` the matching pixel of `other`.
    pub fn le(&self, other: &GrayImage) -> bool {
        self.same_shape(other) && self.pixels.iter().zip(&other.pixels).all(|(a, b)| a <= b)
    }

    pub fn same_shape(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn histogram(&self) -> Histogram {
        histogram(self)
    }
}

/// Row-major foreground mask.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryImage({}x{}, {} set)",
            self.width,
            self.height,
            self.count()
        )
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if bits.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// 256-bin intensity histogram.
#[derive(Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: [u64; 256],
}

impl std::fmt::Debug for Histogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let occupied: Vec<(usize, u64)> = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect();
        f.debug_struct("Histogram")
            .field("occupied", &occupied)
            .finish()
    }
}

impl Default for Histogram {
    fn default() -> Self {
        Self { counts: [0; 256] }
    }
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

pub fn histogram(image: &GrayImage) -> Histogram {
    let mut h = Histogram::default();
    for &p in &image.pixels {
        h.counts[p as usize] += 1;
    }
    h
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Loads a binary PGM (`P5`, maxval 255) or a PNG file, chosen by magic bytes.
pub fn load(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Writes `image` as binary PGM.
pub fn save(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&image.pixels);
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0B | 0x0C => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| ImageError::MalformedHeader {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImageError::UnsupportedMagic { found });
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.read_uint("width")? as usize;
    let height = cur.read_uint("height")? as usize;
    let maxval_offset = {
        cur.skip_whitespace_and_comments();
        cur.pos
    };
    let maxval = cur.read_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader {
            offset: 2,
            reason: format!("zero dimension {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval {
            offset: maxval_offset,
            maxval,
        });
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(ImageError::MalformedHeader {
                offset: cur.pos,
                reason: "expected whitespace after maxval".into(),
            })
        }
    }
    let expected = width * height;
    let available = bytes.len() - cur.pos;
    if available < expected {
        return Err(ImageError::Truncated {
            offset: cur.pos,
            expected,
            found: available,
        });
    }
    GrayImage::from_vec(width, height, bytes[cur.pos..cur.pos + expected].to_vec())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(ImageError::Png("indexed color not expanded".into()))
        }
    };
    let pixels = data
        .chunks_exact(channels)
        .map(|px| match channels {
            1 | 2 => px[0],
            // ITU-R BT.601 luma
            _ => {
                let l = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                l.round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    GrayImage::from_vec(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_minimal_p5() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[1, 2, 3, 4]);
        assert_eq!(img.get(1, 0), 2);
        assert_eq!(img.get(0, 1), 3);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n3 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        assert_eq!(decode_pgm(&bytes).unwrap().pixels(), &[9, 8, 7]);
    }

    #[test]
    fn rejects_ascii_pgm() {
        let err = decode_pgm(b"P3 2 2 255\n0 0 0 0").unwrap_err();
        assert!(matches!(err, ImageError::UnsupportedMagic { .. }));
        assert!(err.to_string().contains("unsupported magic"));
    }

    #[test]
    fn truncated_payload_names_offset() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        match decode_pgm(&bytes).unwrap_err() {
            ImageError::Truncated {
                offset,
                expected,
                found,
            } => assert_eq!((offset, expected, found), (11, 4, 3)),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn rejects_16_bit_maxval() {
        let err = decode_pgm(b"P5 1 1 65535\n\0\0").unwrap_err();
        assert!(matches!(
            err,
            ImageError::UnsupportedMaxval {
                offset: 7,
                maxval: 65535
            }
        ));
    }

    #[test]
    fn malformed_dimension() {
        let err = decode_pgm(b"P5 x 2 255\n").unwrap_err();
        assert!(matches!(err, ImageError::MalformedHeader { offset: 3, .. }));
    }

    #[test]
    fn histogram_counts() {
        let img = GrayImage::new(2, 2, 7);
        let h = histogram(&img);
        assert_eq!(h.counts[7], 4);
        assert_eq!(h.total(), 4);
        assert_eq!(h.occupied_bins(), 1);

        let img = GrayImage::from_vec(2, 2, vec![0, 0, 255, 9]).unwrap();
        let h = histogram(&img);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[255], 1);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn png_grayscale_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        {
            let file = std::fs::File::create(&path).unwrap();
            let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 3, 2);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[10, 20, 30, 40, 50, 60]).unwrap();
        }
        let img = load(&path).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels(), &[10, 20, 30, 40, 50, 60]);
    }

    #[test]
    fn save_load_512() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.pgm");
        let img = GrayImage::from_fn(512, 512, |x, y| ((x * 31 + y * 17 + x * y) % 256) as u8);
        save(&img, &path).unwrap();
        assert_eq!(load(&path).unwrap(), img);
    }

    proptest! {
        #[test]
        fn pgm_roundtrip(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
            let mut state = seed | 1;
            let img = GrayImage::from_fn(w, h, |_, _| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 24) as u8
            });
            let decoded = decode_pgm(&encode_pgm(&img)).unwrap();
            prop_assert_eq!(decoded, img);
        }

        #[test]
        fn histogram_conserves_pixels(w in 1usize..30, h in 1usize..30, v in proptest::collection::vec(any::<u8>(), 900)) {
            let img = GrayImage::from_fn(w, h, |x, y| v[(y * w + x) % v.len()]);
            prop_assert_eq!(histogram(&img).total(), (w * h) as u64);
        }
    }
}
