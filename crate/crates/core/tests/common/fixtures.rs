use std::path::Path;

use attenprune::data::{decode_cifar10, encode_cifar10, load_cifar10_binary, write_cifar10_binary, CIFAR_RECORD_LEN};
use attenprune::data::{decode_idx, encode_idx, load_idx, write_idx};

pub const CIFAR_LABELS: [u8; 3] = [3, 0, 9];
pub const IDX_LABELS: [u8; 4] = [1, 0, 2, 1];
pub const IDX_ROWS: usize = 5;
pub const IDX_COLS: usize = 3;

pub fn cifar_pixel(n: usize, c: usize, y: usize, x: usize) -> u8 {
    ((n * 97 + c * 31 + y * 5 + x * 3) % 256) as u8
}

pub fn idx_pixel(n: usize, y: usize, x: usize) -> u8 {
    ((n * 64 + y * 16 + x * 85) % 256) as u8
}

/// Built byte by byte from the record layout, not through the encoder.
pub fn cifar_fixture() -> Vec<u8> {
    let mut bytes = Vec::new();
    for (n, &label) in CIFAR_LABELS.iter().enumerate() {
        bytes.push(label);
        for c in 0..3 {
            for y in 0..32 {
                for x in 0..32 {
                    bytes.push(cifar_pixel(n, c, y, x));
                }
            }
        }
    }
    assert_eq!(bytes.len(), CIFAR_LABELS.len() * CIFAR_RECORD_LEN);
    bytes
}

pub fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
    let n = IDX_LABELS.len();
    let mut images = vec![0, 0, 8, 3];
    for d in [n, IDX_ROWS, IDX_COLS] {
        images.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for i in 0..n {
        for y in 0..IDX_ROWS {
            for x in 0..IDX_COLS {
                images.push(idx_pixel(i, y, x));
            }
        }
    }
    let mut labels = vec![0, 0, 8, 1];
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    labels.extend_from_slice(&IDX_LABELS);
    (images, labels)
}

#[derive(Debug, Default)]
pub struct FormatReport {
    pub pixels_checked: usize,
    pub failures: Vec<String>,
}

impl FormatReport {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }
}

/// Decodes both fixtures from disk and memory, checks every pixel and label,
/// then re-encodes and re-writes them.
pub fn format_fidelity(dir: &Path) -> FormatReport {
    let mut r = FormatReport::default();
    let mem = Path::new("fixture");

    let cifar = cifar_fixture();
    let cifar_path = dir.join("fixture.bin");
    std::fs::write(&cifar_path, &cifar).unwrap();
    match load_cifar10_binary(&cifar_path) {
        Ok(ds) => {
            let expected: Vec<usize> = CIFAR_LABELS.iter().map(|&l| l as usize).collect();
            r.check(ds.labels == expected, || format!("cifar labels {:?}", ds.labels));
            r.check(ds.images.shape() == [3, 3, 32, 32], || format!("cifar shape {:?}", ds.images.shape()));
            let data = ds.images.data();
            for n in 0..3 {
                for c in 0..3 {
                    for y in 0..32 {
                        for x in 0..32 {
                            let got = data[((n * 3 + c) * 32 + y) * 32 + x];
                            let want = cifar_pixel(n, c, y, x) as f32 / 255.0;
                            r.pixels_checked += 1;
                            r.check(got == want, || format!("cifar pixel {n},{c},{y},{x}: {got} != {want}"));
                        }
                    }
                }
            }
            r.check(encode_cifar10(&ds).ok().as_ref() == Some(&cifar), || "cifar re-encode differs".into());
            let out = dir.join("rewritten.bin");
            write_cifar10_binary(&ds, &out).unwrap();
            r.check(std::fs::read(&out).unwrap() == cifar, || "cifar rewrite differs".into());
        }
        Err(e) => r.failures.push(format!("cifar decode: {e}")),
    }
    r.check(decode_cifar10(&cifar[..cifar.len() - 1], mem).is_err(), || "truncated cifar accepted".into());
    let mut bad = cifar.clone();
    bad[CIFAR_RECORD_LEN] = 10;
    r.check(decode_cifar10(&bad, mem).is_err(), || "cifar label 10 accepted".into());

    let (images, labels) = idx_fixture();
    let (ip, lp) = (dir.join("images.idx"), dir.join("labels.idx"));
    std::fs::write(&ip, &images).unwrap();
    std::fs::write(&lp, &labels).unwrap();
    match load_idx(&ip, &lp) {
        Ok(ds) => {
            let expected: Vec<usize> = IDX_LABELS.iter().map(|&l| l as usize).collect();
            r.check(ds.labels == expected, || format!("idx labels {:?}", ds.labels));
            r.check(ds.class_count == 3, || format!("idx classes {}", ds.class_count));
            r.check(ds.images.shape() == [4, 1, IDX_ROWS, IDX_COLS], || format!("idx shape {:?}", ds.images.shape()));
            let data = ds.images.data();
            for n in 0..IDX_LABELS.len() {
                for y in 0..IDX_ROWS {
                    for x in 0..IDX_COLS {
                        let got = data[(n * IDX_ROWS + y) * IDX_COLS + x];
                        let want = idx_pixel(n, y, x) as f32 / 255.0;
                        r.pixels_checked += 1;
                        r.check(got == want, || format!("idx pixel {n},{y},{x}: {got} != {want}"));
                    }
                }
            }
            r.check(encode_idx(&ds).ok() == Some((images.clone(), labels.clone())), || "idx re-encode differs".into());
            let (ip2, lp2) = (dir.join("images2.idx"), dir.join("labels2.idx"));
            write_idx(&ds, &ip2, &lp2).unwrap();
            r.check(std::fs::read(&ip2).unwrap() == images && std::fs::read(&lp2).unwrap() == labels, || {
                "idx rewrite differs".into()
            });
        }
        Err(e) => r.failures.push(format!("idx decode: {e}")),
    }
    r.check(decode_idx(&images[..images.len() - 2], &labels, mem, mem).is_err(), || "truncated idx accepted".into());
    r.check(decode_idx(&images, &labels[..labels.len() - 1], mem, mem).is_err(), || "short labels accepted".into());
    r
}
