use std::fs;
use std::path::Path;

use cnnkit::checkpoint::{load_into, save, Checkpoint};
use cnnkit::dataset::load_image;
use cnnkit::{nct, ppm};
use cnnkit_core::image::Image;
use cnnkit_core::nn::{init_parameters, Arch};
use cnnkit_core::rng::stream;
use cnnkit_core::Tensor;
use rand::Rng;

#[test]
fn ppm_decode_encode_is_byte_identical() {
    let mut r = stream(3, &[1]);
    for case in 0..200 {
        let (h, w) = (r.random_range(1..20), r.random_range(1..20));
        let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
        bytes.extend((0..3 * h * w).map(|_| r.random::<u8>()));
        let img = ppm::decode(&bytes, Path::new("x.ppm")).unwrap();
        assert_eq!(ppm::encode(&img), bytes, "case {case}");
    }
}

#[test]
fn ppm_pixel_values() {
    let img = ppm::decode(b"P6\n1 1\n255\n\xff\x00\x80", Path::new("p.ppm")).unwrap();
    assert_eq!(img.pixel(0, 0), [1.0, 0.0, 128.0 / 255.0]);
    assert!((img.pixel(0, 0)[2] - 0.50196).abs() < 1e-5);

    let zeros = ppm::decode(b"P6 2 2 255\n\0\0\0\0\0\0\0\0\0\0\0\0", Path::new("z.ppm")).unwrap();
    assert!(zeros.data().iter().all(|&v| v == 0.0));
}

#[test]
fn ppm_truncation_is_a_format_error() {
    let err = ppm::decode(b"P6\n2 2\n255\n\0\0\0", Path::new("t.ppm")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("t.ppm"));
}

#[test]
fn nct_images_load_channel_first() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.nct");
    // Channel c holds 0.1 * (c + 1) + 0.01 * pixel index.
    let data: Vec<f32> = (0..3)
        .flat_map(|c| (0..6).map(move |i| 0.1 * (c + 1) as f32 + 0.01 * i as f32))
        .collect();
    nct::write(&path, &Tensor::from_vec(&[3, 2, 3], data.clone()).unwrap()).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!((img.height(), img.width()), (2, 3));
    for i in 0..6 {
        let px = img.pixel(i / 3, i % 3);
        for c in 0..3 {
            assert_eq!(px[c], data[c * 6 + i]);
        }
    }
}

#[test]
fn nct_values_outside_unit_range_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nct");
    nct::write(
        &path,
        &Tensor::from_vec(&[3, 1, 1], vec![0.5, 1.5, 0.0]).unwrap(),
    )
    .unwrap();
    let err = load_image(&path).unwrap_err();
    assert!(err.to_string().contains("1.5"), "{err}");

    nct::write(&path, &Tensor::from_vec(&[1, 2, 2], vec![0.0; 4]).unwrap()).unwrap();
    assert!(load_image(&path).is_err());

    let good = nct::encode(&Tensor::from_vec(&[3, 1, 1], vec![0.5; 3]).unwrap());
    fs::write(&path, &good[..good.len() - 2]).unwrap();
    assert_eq!(load_image(&path).unwrap_err().exit_code(), 3);
}

#[test]
fn unsupported_files_name_the_conversion_step() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("photo.png");
    fs::write(&path, b"\x89PNG\r\n\x1a\n").unwrap();
    let msg = load_image(&path).unwrap_err().to_string();
    assert!(msg.contains("photo.png") && msg.contains("PPM"), "{msg}");
}

#[test]
fn images_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    let img = Image::from_fn(4, 5, |y, x| [y as f32 / 3.0, x as f32 / 4.0, 1.0]).unwrap();
    ppm::write(&path, &img).unwrap();
    let back = load_image(&path).unwrap();
    for (a, b) in img.data().iter().zip(back.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-7);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut a = Arch::Resnet18.build::<f32>(4).unwrap();
    init_parameters(&mut a, 11);
    for (i, b) in a.buffers_mut().iter_mut().enumerate() {
        b.value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.001 * i as f32);
    }
    save(&a, &path, None).unwrap();
    let mut b = Arch::Resnet18.build::<f32>(4).unwrap();
    load_into(&mut b, &path).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    for ((_, _, x), (_, _, y)) in a.state_entries().zip(b.state_entries()) {
        assert!(x
            .data()
            .iter()
            .zip(y.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    // Only the checkpoint itself remains: the temporary file was renamed.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn checkpoint_missing_parameter_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let a = Arch::Custom.build::<f32>(2).unwrap();
    let mut ck = Checkpoint::from_model(&a, None);
    let i = ck
        .header
        .entries
        .iter()
        .position(|e| e.name == "stage3.conv.conv.weight")
        .unwrap();
    ck.header.entries.remove(i);
    ck.tensors.remove(i);
    // Offsets must stay consistent for the file to parse at all.
    let mut off = 0;
    for (e, t) in ck.header.entries.iter_mut().zip(&ck.tensors) {
        e.byte_offset = off;
        off += 4 * t.len() as u64;
    }
    ck.write(&path).unwrap();
    let mut b = Arch::Custom.build::<f32>(2).unwrap();
    let err = load_into(&mut b, &path).unwrap_err().to_string();
    assert!(err.contains("stage3.conv.conv.weight"), "{err}");
}

#[test]
fn checkpoint_corruption_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let a = Arch::Custom.build::<f32>(2).unwrap();
    save(&a, &path, None).unwrap();
    let bytes = fs::read(&path).unwrap();

    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(Checkpoint::read(&path)
        .unwrap_err()
        .to_string()
        .contains("truncated"));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, &bad).unwrap();
    assert!(Checkpoint::read(&path)
        .unwrap_err()
        .to_string()
        .contains("magic"));

    fs::write(&path, &bytes).unwrap();
    let mut vgg = Arch::Vgg16.build::<f32>(2).unwrap();
    let err = load_into(&mut vgg, &path).unwrap_err().to_string();
    assert!(err.contains("architecture"), "{err}");
}
