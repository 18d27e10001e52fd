use std::fs;

use sisr::dataset::{load_manifest, manifest_text};
use sisr::io::{load_image, save_image};
use sisr::weights::{read_archive, write_archive};
use sisr::Error;
use sisr_core::image::ImageBuffer;
use sisr_core::{Params, Tensor};

#[test]
fn png_with_known_bytes_decodes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    let bytes: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
    image::RgbImage::from_raw(2, 2, bytes.clone()).unwrap().save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!((img.width(), img.height()), (2, 2));
    assert_eq!(img.to_rgb8(), bytes);
}

#[test]
fn png_and_ppm_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let bytes: Vec<u8> = (0..5 * 3 * 3).map(|i| (i * 37 % 256) as u8).collect();
    let img = ImageBuffer::from_rgb8(5, 3, &bytes).unwrap();
    for name in ["x.png", "x.ppm"] {
        let path = dir.path().join(name);
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.to_rgb8(), bytes, "{name}");
        save_image(&back, &path).unwrap();
        assert_eq!(load_image(&path).unwrap().to_rgb8(), bytes);
    }
    let ppm = fs::read(dir.path().join("x.ppm")).unwrap();
    assert_eq!(&ppm[..2], b"P6");
}

#[test]
fn truncated_and_missing_files_are_errors_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.png");
    let img = ImageBuffer::filled(16, 16, 0.3);
    save_image(&img, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_image(&path).unwrap_err();
    assert!(matches!(err, Error::Image { .. }), "{err}");
    assert!(err.to_string().contains("t.png"));
    let missing = load_image(dir.path().join("nope.png")).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
}

#[test]
fn sixteen_bit_images_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deep.png");
    let img = image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(2, 2, vec![1000u16; 12]).unwrap();
    img.save(&path).unwrap();
    let err = load_image(&path).unwrap_err().to_string();
    assert!(err.contains("bit depth"), "{err}");
}

#[test]
fn archive_files_round_trip_and_report_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.srwt");
    let mut p = Params::new();
    p.insert("b", Tensor::from_data(&[2, 2], vec![1.0f32, -0.0, f32::MIN_POSITIVE / 2.0, 3.5]).unwrap());
    p.insert("a", Tensor::scalar(7.0f32));
    write_archive(&p, &path).unwrap();
    assert_eq!(read_archive(&path).unwrap(), p);
    assert!(!dir.path().join("w.srwt.tmp").exists());

    let empty = dir.path().join("e.srwt");
    write_archive(&Params::new(), &empty).unwrap();
    assert!(read_archive(&empty).unwrap().is_empty());

    let mut bytes = fs::read(&path).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&path, &bytes).unwrap();
    match read_archive(&path).unwrap_err() {
        Error::InFile { source: sisr_core::Error::ArchiveParse { offset, .. }, .. } => assert_eq!(offset, 0),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn manifests_resolve_relative_to_their_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("data/hr")).unwrap();
    save_image(&ImageBuffer::filled(8, 8, 0.5), dir.path().join("data/hr/a.png")).unwrap();
    let text = manifest_text("data", &[("hr/a.png".into(), None)]).unwrap();
    fs::write(dir.path().join("m.txt"), text).unwrap();
    let ds = load_manifest(dir.path().join("m.txt")).unwrap();
    assert_eq!(ds.entries.len(), 1);
    assert_eq!(ds.entries[0].name, "hr/a.png");
    assert!(ds.entries[0].load().unwrap().lr.is_none());

    fs::write(dir.path().join("bad.txt"), "scale 4\nentry hr/missing.png\n").unwrap();
    let err = load_manifest(dir.path().join("bad.txt")).unwrap_err();
    assert!(matches!(err, Error::InFile { source: sisr_core::Error::ManifestInvalid(_), .. }), "{err}");

    fs::write(dir.path().join("two.txt"), "scale 2\n").unwrap();
    assert!(load_manifest(dir.path().join("two.txt")).is_err());
}
