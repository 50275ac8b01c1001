use std::fs;

use pce::data::{
    decode_ppm, encode_ppm, load_image, save_image, synth_image, write_corpus, DatasetManifest,
    Image, Split,
};
use pce::PceError;

fn listing(dir: &std::path::Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn ppm_file_roundtrip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = b"P6\n# fixture\n4 3\n255\n".to_vec();
    bytes.extend((0..36u8).map(|i| i.wrapping_mul(71)));
    let src = dir.path().join("src.ppm");
    fs::write(&src, &bytes).unwrap();
    let img = load_image(&src).unwrap();
    let dst = dir.path().join("dst.ppm");
    save_image(&img, &dst).unwrap();
    let canonical = encode_ppm(&decode_ppm(&bytes).unwrap());
    assert_eq!(fs::read(&dst).unwrap(), canonical);
    let again = dir.path().join("again.ppm");
    save_image(&load_image(&dst).unwrap(), &again).unwrap();
    assert_eq!(fs::read(&again).unwrap(), fs::read(&dst).unwrap());
    assert_eq!(listing(dir.path()), ["again.ppm", "dst.ppm", "src.ppm"]);
}

#[test]
fn png_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let img = synth_image(5, 0, 24);
    let p = dir.path().join("x.png");
    save_image(&img, &p).unwrap();
    assert_eq!(load_image(&p).unwrap(), img);
}

#[test]
fn non_image_rejected_without_leftovers() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("notes.ppm");
    fs::write(&text, "just some words\n").unwrap();
    assert!(matches!(
        load_image(&text),
        Err(PceError::Format { offset: 0, .. })
    ));
    let img = Image::filled(2, 2, [1, 2, 3]);
    assert!(save_image(&img, dir.path().join("out.jpg")).is_err());
    assert!(save_image(&img, dir.path().join("missing/out.ppm")).is_err());
    assert_eq!(listing(dir.path()), ["notes.ppm"]);
}

#[test]
fn missing_file_is_an_io_error_with_path() {
    let err = load_image("/nonexistent/pic.ppm").unwrap_err();
    assert!(matches!(err, PceError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/pic.ppm"));
}

#[test]
fn corpus_manifest_loads_with_splits() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), 10, 3, 16, 9).unwrap();
    let m = DatasetManifest::load(&manifest).unwrap();
    assert_eq!(m.split(Split::Train).len(), 7);
    let test = m.split(Split::Test);
    assert_eq!(test.len(), 3);
    assert_eq!(load_image(&test[0]).unwrap(), synth_image(9, 7, 16));
}
