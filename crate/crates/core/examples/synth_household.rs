//! Generates the bundled test fixture: a synthetic single-household trace in the
//! layout of the UCI "Individual household electric power consumption" file.
//!
//! ```bash
//! cargo run -p gridcast-core --example synth_household -- crates/core/tests/data/household_power_20k.txt
//! ```
//!
//! The trace is built from appliance-level state machines (fridge compressor,
//! thermostatic water heater, cooker duty cycles, kettle and microwave bursts,
//! washing machine programmes, lighting) driven by a daily occupancy profile.
//! Three short gaps are written with the `?` missing marker.

use std::fmt::Write as _;
use std::io::Write as _;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SAMPLES: usize = 20_000;
const SEED: u64 = 20_061_216;
const GAPS: [(usize, usize); 3] = [(4_311, 2), (9_876, 7), (15_020, 1)];

/// Relative household activity by minute of day, 0 (asleep/away) to 1.
fn activity(minute_of_day: usize, weekend: bool) -> f64 {
    let hour = minute_of_day as f64 / 60.0;
    match hour {
        h if h < 6.0 => 0.03,
        h if h < 6.5 => 0.3,
        h if h < 9.0 => {
            if weekend {
                0.6
            } else {
                0.85
            }
        }
        h if h < 17.0 => {
            if weekend {
                0.6
            } else {
                0.15
            }
        }
        h if h < 23.0 => 1.0,
        _ => 0.35,
    }
}

struct Fridge {
    on: bool,
    remaining: u32,
    minutes_on: u32,
}

impl Fridge {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.remaining == 0 {
            self.on = !self.on;
            self.remaining = if self.on {
                rng.random_range(12..21)
            } else {
                rng.random_range(22..38)
            };
        }
        self.remaining -= 1;
        if self.on {
            self.minutes_on += 1;
            // compressor inrush on the first minute
            if self.minutes_on == 1 {
                0.32
            } else {
                0.12
            }
        } else {
            self.minutes_on = 0;
            0.0
        }
    }
}

struct WaterHeater {
    temperature: f64,
    heating: bool,
}

impl WaterHeater {
    fn step(&mut self, draw: f64) -> f64 {
        self.temperature -= 0.012 + draw;
        if self.temperature < 52.0 {
            self.heating = true;
        }
        if self.heating {
            self.temperature += 0.11;
            if self.temperature >= 60.0 {
                self.heating = false;
            }
            1.05
        } else {
            0.0
        }
    }
}

#[derive(Default)]
struct Burst {
    power: f64,
    remaining: u32,
}

impl Burst {
    fn step(&mut self) -> f64 {
        if self.remaining == 0 {
            return 0.0;
        }
        self.remaining -= 1;
        self.power
    }
}

#[derive(Default)]
struct Cooker {
    remaining: u32,
    phase_left: u32,
    heating: bool,
}

impl Cooker {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.remaining == 0 {
            return 0.0;
        }
        self.remaining -= 1;
        if self.phase_left == 0 {
            self.heating = !self.heating;
            self.phase_left = if self.heating {
                rng.random_range(4..9)
            } else {
                rng.random_range(3..7)
            };
        }
        self.phase_left -= 1;
        if self.heating {
            2.05
        } else {
            0.0
        }
    }
}

#[derive(Default)]
struct Washer {
    minute: u32,
    heat_len: u32,
    total_len: u32,
}

impl Washer {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.minute >= self.total_len {
            return 0.0;
        }
        self.minute += 1;
        if self.minute <= self.heat_len {
            2.0
        } else if self.minute % 3 == 0 {
            0.45 + rng.random_range(0.0..0.1)
        } else {
            0.22
        }
    }
}

fn main() {
    let out_path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "household_power_20k.txt".to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let meter_noise = Normal::new(0.0, 1.0).unwrap();

    let start = NaiveDate::from_ymd_opt(2006, 12, 16)
        .unwrap()
        .and_hms_opt(17, 24, 0)
        .unwrap();

    let mut fridge = Fridge {
        on: false,
        remaining: 7,
        minutes_on: 0,
    };
    let mut heater = WaterHeater {
        temperature: 57.0,
        heating: false,
    };
    let mut kettle = Burst::default();
    let mut microwave = Burst::default();
    let mut dishwasher = Burst::default();
    let mut cooker = Cooker::default();
    let mut washer = Washer::default();
    let mut lights = 0u32;
    let mut standby = 0.17;

    let mut text = String::with_capacity(SAMPLES * 64);
    text.push_str("Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3\n");

    for t in 0..SAMPLES {
        let now = start + Duration::minutes(t as i64);
        let minute_of_day = (17 * 60 + 24 + t) % 1440;
        let weekend = matches!(
            now.format("%u").to_string().as_str(),
            "6" | "7"
        );
        let a = activity(minute_of_day, weekend);

        standby = (standby + 0.002 * (rng.random::<f64>() - 0.5)).clamp(0.12, 0.24);

        if kettle.remaining == 0 && rng.random::<f64>() < 0.006 * a {
            kettle = Burst {
                power: rng.random_range(1.95..2.25),
                remaining: rng.random_range(2..5),
            };
        }
        if microwave.remaining == 0 && rng.random::<f64>() < 0.003 * a {
            microwave = Burst {
                power: rng.random_range(1.1..1.35),
                remaining: rng.random_range(1..7),
            };
        }
        let dinner = (18 * 60..20 * 60).contains(&minute_of_day);
        if cooker.remaining == 0 && dinner && rng.random::<f64>() < 0.006 {
            cooker = Cooker {
                remaining: rng.random_range(35..95),
                phase_left: 0,
                heating: false,
            };
        }
        if washer.minute >= washer.total_len && rng.random::<f64>() < 0.0006 * a {
            washer = Washer {
                minute: 0,
                heat_len: rng.random_range(12..22),
                total_len: rng.random_range(70..110),
            };
        }
        if dishwasher.remaining == 0 && minute_of_day > 20 * 60 && rng.random::<f64>() < 0.0008 {
            dishwasher = Burst {
                power: rng.random_range(1.8..2.1),
                remaining: rng.random_range(20..35),
            };
        }

        // lights and entertainment follow activity with a slow birth-death process
        let target = (a * 6.0).round() as u32;
        if lights < target && rng.random::<f64>() < 0.08 {
            lights += 1;
        } else if lights > target && rng.random::<f64>() < 0.05 {
            lights -= 1;
        }

        let shower = if (minute_of_day == 7 * 60 + 10 || minute_of_day == 21 * 60 + 30)
            && rng.random::<f64>() < 0.7
        {
            9.0
        } else {
            0.0
        };
        let small_draw = if rng.random::<f64>() < 0.02 * a { 0.6 } else { 0.0 };

        let kitchen = kettle.step() + microwave.step() + cooker.step(&mut rng) + dishwasher.step();
        let laundry = washer.step(&mut rng) + fridge.step(&mut rng);
        let water = heater.step(shower + small_draw);
        let unmetered = standby + 0.075 * lights as f64;

        let true_power = kitchen + laundry + water + unmetered;
        let measured =
            (true_power * (1.0 + 0.01 * meter_noise.sample(&mut rng)) + 0.002 * meter_noise.sample(&mut rng))
                .max(0.076);

        let date = format!("{}", now.format("%-d/%-m/%Y"));
        let time = format!("{}", now.format("%H:%M:%S"));
        if GAPS.iter().any(|&(at, len)| t >= at && t < at + len) {
            writeln!(text, "{date};{time};?;?;?;?;?;?;").unwrap();
            continue;
        }

        let reactive = (0.05 + 0.25 * (laundry > 0.2) as u8 as f64 + 0.03 * rng.random::<f64>()).min(0.9);
        let voltage = 241.5 - 1.2 * measured + 1.5 * meter_noise.sample(&mut rng);
        let intensity = (measured * 1000.0 / voltage / 0.2).round() * 0.2;
        let wh = |kw: f64| (kw * 1000.0 / 60.0).round();
        writeln!(
            text,
            "{date};{time};{:.3};{:.3};{:.2};{:.3};{:.3};{:.3};{:.3}",
            measured,
            reactive,
            voltage,
            intensity,
            wh(kitchen),
            wh(laundry),
            wh(water),
        )
        .unwrap();
    }

    std::fs::File::create(&out_path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .expect("write fixture");
    eprintln!("wrote {SAMPLES} records to {out_path}");
}
