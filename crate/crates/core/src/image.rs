//! 8-bit RGB image buffer and binary PPM (P6) I/O.

use std::io::{BufRead, Write};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageDecoder, ImageEncoder};

#[derive(Debug, thiserror::Error)]
pub enum PpmError {
    #[error(transparent)]
    Codec(#[from] image::ImageError),
    #[error("unsupported PPM: {0}")]
    Malformed(String),
}

/// Interleaved RGB, row-major, 8 bits per channel.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies out the `w x h` region at `(x, y)`; the region must lie inside.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> RgbImage {
        assert!(x + w <= self.width && y + h <= self.height, "crop outside image");
        let mut data = Vec::with_capacity(w as usize * h as usize * 3);
        for row in y..y + h {
            let start = self.offset(x, row);
            data.extend_from_slice(&self.data[start..start + w as usize * 3]);
        }
        RgbImage { width: w, height: h, data }
    }

    pub fn write_ppm<W: Write>(&self, out: W) -> Result<(), PpmError> {
        PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&self.data, self.width, self.height, ExtendedColorType::Rgb8)?;
        Ok(())
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.data.len() + 20);
        self.write_ppm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads an 8-bit binary PPM (P6).
    pub fn read_ppm<R: BufRead>(input: R) -> Result<Self, PpmError> {
        let decoder = PnmDecoder::new(input)?;
        if decoder.subtype() != PnmSubtype::Pixmap(SampleEncoding::Binary) {
            return Err(PpmError::Malformed(format!("{:?}, expected binary pixmap (P6)", decoder.subtype())));
        }
        if decoder.color_type() != ColorType::Rgb8 {
            return Err(PpmError::Malformed(format!("{:?} samples, expected 8-bit RGB", decoder.color_type())));
        }
        let (width, height) = decoder.dimensions();
        let mut data = vec![0u8; decoder.total_bytes() as usize];
        decoder.read_image(&mut data)?;
        Ok(RgbImage { width, height, data })
    }
}
