#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rfnet::rng::StreamKey;

/// Environment variable pointing at the real appliances energy CSV.
pub const APPLIANCES_ENV: &str = "RFNET_APPLIANCES_CSV";

pub const STAND_IN_ROWS: usize = 19_735;

const SENSORS: [&str; 26] = [
    "lights", "T1", "RH_1", "T2", "RH_2", "T3", "RH_3", "T4", "RH_4", "T5", "RH_5", "T6", "RH_6", "T7", "RH_7",
    "T8", "RH_8", "T9", "RH_9", "T_out", "Press_mm_hg", "RH_out", "Windspeed", "Visibility", "Tdewpoint", "rv1",
];

/// Writes a synthetic file with the appliances dataset's layout: a timestamp,
/// the `Appliances` target, 26 correlated sensor-like columns and two pure
/// noise columns (`rv1`, `rv2`). Readings follow a daily cycle plus smooth
/// drift; the target is a skewed nonlinear function of a few of them.
pub fn write_stand_in(path: &Path, rows: usize, seed: u64) {
    let mut rng = StreamKey::new(seed).rng();
    let mut header = String::from("date,Appliances");
    for name in SENSORS {
        header.push(',');
        header.push_str(name);
    }
    header.push_str(",rv2\n");

    let mut out = header;
    let mut drift = [0.0f64; 4];
    for k in 0..rows {
        let day = 2.0 * std::f64::consts::PI * (k % 144) as f64 / 144.0;
        for d in drift.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *d = 0.995 * *d + 0.1 * z;
        }
        let cycle = day.sin();
        let mut vals = Vec::with_capacity(28);
        let lights = if cycle > 0.3 && rng.random::<f64>() < 0.4 { 10.0 * rng.random_range(1..4) as f64 } else { 0.0 };
        vals.push(lights);
        for room in 0..9 {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let temp = 20.0 + room as f64 * 0.4 + 1.5 * cycle + drift[room % 4] + 0.3 * z1;
            let hum = 40.0 - 2.0 * cycle + 3.0 * drift[(room + 1) % 4] + 1.5 * z2;
            vals.push(temp);
            vals.push(hum);
        }
        let z: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let t_out = 7.0 + 5.0 * cycle + 2.0 * drift[0] + 0.5 * z[0];
        vals.push(t_out);
        vals.push(755.0 + 5.0 * drift[2] + 0.3 * z[1]);
        vals.push(80.0 - 10.0 * cycle + 4.0 * drift[3] + 2.0 * z[2]);
        vals.push((4.0 + 1.5 * drift[1] + z[3]).abs());
        vals.push((38.0 + 8.0 * z[4]).clamp(1.0, 66.0));
        vals.push(t_out - 4.0 + 0.5 * z[5]);
        vals.push(50.0 * rng.random::<f64>());
        let rv2 = 50.0 * rng.random::<f64>();

        let noise: f64 = StandardNormal.sample(&mut rng);
        let load = 0.8 * cycle + 0.05 * lights + 0.3 * (vals[1] - 20.0) - 0.02 * (vals[2] - 40.0) + 0.4 * noise;
        let appliances = (4.0 + 3.0 * load.exp()).round() * 10.0;

        let minute = (k * 10) % 60;
        let hour = (k * 10 / 60) % 24;
        // ISO ordinal date, day 11 onwards
        let ordinal = 11 + k / 144;
        let _ = write!(out, "2016-{ordinal:03} {hour:02}:{minute:02}:00,{appliances}");
        for v in &vals {
            let _ = write!(out, ",{v:.4}");
        }
        let _ = writeln!(out, ",{rv2:.4}");
    }
    std::fs::write(path, out).expect("write stand-in csv");
}

/// Path of the real dataset if configured and present.
pub fn real_appliances() -> Option<PathBuf> {
    std::env::var_os(APPLIANCES_ENV)
        .map(PathBuf::from)
        .filter(|p| p.exists())
}
