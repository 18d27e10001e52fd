//! SRWT archive files.

use std::fs;
use std::path::Path;

use sisr_core::archive::{decode, encode_params};
use sisr_core::discriminator::DiscWeights;
use sisr_core::generator::GeneratorWeights;
use sisr_core::Params;

use crate::error::{Error, Result};

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written archive under the final name.
pub fn write_archive(params: &Params<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_params(params).map_err(Error::in_file(path))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Params<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(Error::in_file(path))
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<GeneratorWeights<f32>> {
    let path = path.as_ref();
    GeneratorWeights::from_archive(read_archive(path)?).map_err(Error::in_file(path))
}

pub fn save_generator(gen: &GeneratorWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_archive(&gen.to_archive(), path)
}

pub fn load_discriminator(path: impl AsRef<Path>) -> Result<DiscWeights<f32>> {
    let path = path.as_ref();
    DiscWeights::from_archive(read_archive(path)?).map_err(Error::in_file(path))
}
