//! Image files: 8-bit PNG and binary PPM (P6).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader, RgbImage};
use sisr_core::image::ImageBuffer;

use crate::error::{Error, Result};

/// Decodes an 8-bit PNG or PPM into RGB. Grey and alpha variants are
/// widened to RGB (alpha is dropped); deeper sample formats are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let fail = |reason: String| Error::Image { path: path.to_path_buf(), reason };
    let reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format().map_err(|e| fail(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm) => {}
        Some(other) => return Err(fail(format!("unsupported format {other:?}"))),
        None => return Err(fail("unrecognized image format".into())),
    }
    let img = reader.decode().map_err(|e| fail(format!("decode failed: {e}")))?;
    match img.color() {
        ColorType::Rgb8 | ColorType::Rgba8 | ColorType::L8 | ColorType::La8 => {}
        other => return Err(fail(format!("unsupported bit depth ({other:?}); only 8-bit images are accepted"))),
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(ImageBuffer::from_rgb8(w as usize, h as usize, rgb.as_raw())?)
}

/// Writes 8-bit RGB, PNG unless the extension is `.ppm` or `.pnm`.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fail = |reason: String| Error::Image { path: path.to_path_buf(), reason };
    let rgb = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .ok_or_else(|| fail("buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    let encoded = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm" | "pnm") => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(rgb.as_raw(), rgb.width(), rgb.height(), ExtendedColorType::Rgb8),
        _ => rgb.write_to(&mut out, ImageFormat::Png),
    };
    encoded.map_err(|e| fail(format!("encode failed: {e}")))?;
    fs::write(path, out.into_inner()).map_err(Error::io(path))
}

/// Whether `path` has an extension this module reads.
pub fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm" | "pnm")
    )
}
