use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prak_core::am::{self, AmConfig, AmParams};
use prak_core::frontend::{write_wav, AudioBuffer, SAMPLE_RATE};
use prak_core::io_textgrid::{Interval, TextGrid, Tier, PHONE_TIER, WORD_TIER};
use prak_core::phoneset::PhoneInventory;
use prak_core::synth::{generate_corpus, SynthConfig};
use prak_core::trainer::read_log;

fn prak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prak"))
        .args(args)
        .env_remove("PRAK_MODEL")
        .output()
        .expect("run prak")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, content).unwrap();
    p
}

#[test]
fn pron_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let text = write(dir.path(), "w.txt", "Washingtonu\n");
    let rules = write(dir.path(), "rules.txt", "washington vošingtn\n");
    let out = prak(&["pron", "--text", s(&text), "--rules", s(&rules)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l.contains("vošiŋktnu")), "{}", stdout(&out));
}

#[test]
fn pron_variants_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let text = write(dir.path(), "p.txt", "procentní");
    let out = prak(&["pron", "--text", s(&text)]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out).lines().find(|l| l.starts_with("procentní")).unwrap().to_string();
    assert_eq!(line.split('\t').nth(1).unwrap().split('/').count(), 3, "{line}");

    let empty = write(dir.path(), "e.txt", "");
    let out = prak(&["pron", "--text", s(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn text_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let text = write(dir.path(), "d.txt", "první řádek\nmám 5 psů\n");
    let out = prak(&["pron", "--text", s(&text)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
    let out = prak(&["validate", "--text", s(&text)]);
    assert_eq!(out.status.code(), Some(1));
    let ok = write(dir.path(), "ok.txt", "dobrý den");
    let out = prak(&["validate", "--text", s(&ok)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("ok\t"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    assert_eq!(prak(&["pron", "--text", s(&missing)]).status.code(), Some(2));
    assert_eq!(prak(&["pron"]).status.code(), Some(2));
    let bad_cfg = write(dir.path(), "bad.ini", "[decoder]\nbeta = 2\n");
    let text = write(dir.path(), "t.txt", "ahoj");
    let out = prak(&["pron", "--config", s(&bad_cfg), "--text", s(&text)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown key"), "{}", stderr(&out));
    let out = prak(&["train", "--manifest", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verbose_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.ini", "[decoder]\nalpha = 0.25\n");
    let text = write(dir.path(), "t.txt", "ahoj");
    let out = prak(&["--verbose", "--config", s(&cfg), "pron", "--text", s(&text)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("alpha = 0.25"), "{}", stderr(&out));
}

fn random_model(dir: &Path) -> PathBuf {
    let inv = PhoneInventory::czech();
    let cfg = AmConfig {
        hidden_dims: vec![16],
        ..AmConfig::for_inventory(&inv)
    };
    let path = dir.join("random.prakam");
    am::save(&AmParams::init(&cfg).unwrap(), &cfg, &inv, &path).unwrap();
    path
}

fn noise_wav(path: &Path, seconds: f64, seed: u32) {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let mut x = seed;
    let samples = (0..n)
        .map(|_| {
            x = x.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            (x >> 8) as f32 / (1u32 << 24) as f32 * 0.2 - 0.1
        })
        .collect();
    write_wav(
        path,
        &AudioBuffer {
            samples,
            sample_rate: SAMPLE_RATE,
        },
    )
    .unwrap();
}

#[test]
fn align_two_recordings_one_text() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(dir.path());
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    noise_wav(&a, 1.0, 1);
    noise_wav(&b, 1.3, 2);
    let text = write(dir.path(), "t.txt", "ahoj světe");
    let out_dir = dir.path().join("grids");
    let out = prak(&[
        "align", "--audio", s(&a), "--audio", s(&b), "--text", s(&text), "--model", s(&model), "--out-dir",
        s(&out_dir), "--jobs", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for (name, dur) in [("a", 1.0), ("b", 1.3)] {
        let grid = TextGrid::read(&out_dir.join(format!("{name}.TextGrid"))).unwrap();
        assert!((grid.xmax - dur).abs() < 1e-9);
        let words: Vec<&str> = grid
            .tier(WORD_TIER)
            .unwrap()
            .intervals
            .iter()
            .map(|i| i.text.as_str())
            .filter(|t| !t.is_empty())
            .collect();
        assert_eq!(words, vec!["ahoj", "světe"]);
        assert!(grid.tier(PHONE_TIER).unwrap().intervals.len() >= 8);
    }
}

#[test]
fn align_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(dir.path());
    let wav = dir.path().join("short.wav");
    noise_wav(&wav, 0.2, 3);

    // Empty text: silent grid next to the recording.
    let empty = write(dir.path(), "e.txt", " \n");
    let out = Command::new(env!("CARGO_BIN_EXE_prak"))
        .args(["align", "--audio", s(&wav), "--text", s(&empty)])
        .env("PRAK_MODEL", &model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let grid = TextGrid::read(&dir.path().join("short.TextGrid")).unwrap();
    assert!(grid.tiers.iter().all(|t| t.intervals.len() == 1 && t.intervals[0].text.is_empty()));

    // Too much text for 0.2 s.
    let long = write(dir.path(), "l.txt", &"nejneobhospodařovávatelnějšími ".repeat(3));
    let out = prak(&["align", "--audio", s(&wav), "--text", s(&long), "--model", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("too long"), "{}", stderr(&out));

    // No model anywhere.
    let out = prak(&["align", "--audio", s(&wav), "--text", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    fs::create_dir(&corpus_dir).unwrap();
    let corpus = generate_corpus(&SynthConfig {
        utterances: 4,
        words: (2, 3),
        ..Default::default()
    });
    for (i, u) in corpus.iter().enumerate() {
        write_wav(&corpus_dir.join(format!("u{i}.wav")), &u.audio).unwrap();
        fs::write(corpus_dir.join(format!("u{i}.txt")), &u.text).unwrap();
    }
    let cfg = write(dir.path(), "train.ini", "[am]\nhidden_dims = 16\n[trainer]\nchange_threshold = 0\n");
    let out_dir = dir.path().join("model");
    let out = prak(&["train", "--config", s(&cfg), "--manifest", s(&corpus_dir), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("epoch")).count(), 10);
    assert!(out_dir.join("model.prakam").exists());
    assert!(out_dir.join("model.prior.json").exists());
    assert_eq!(read_log(&out_dir.join("train.log.jsonl")).unwrap().len(), 10);

    let out = prak(&[
        "train", "--config", s(&cfg), "--manifest", s(&corpus_dir), "--out", s(&out_dir), "--resume", "--epochs",
        "12",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("resuming after epoch 10"));
    let log = read_log(&out_dir.join("train.log.jsonl")).unwrap();
    assert_eq!(log.iter().map(|r| r.epoch).collect::<Vec<_>>(), (1..=12).collect::<Vec<_>>());

    // The trained model aligns one of its own utterances.
    let wav = corpus_dir.join("u0.wav");
    let out = prak(&[
        "align", "--audio", s(&wav), "--text", s(&corpus_dir.join("u0.txt")), "--model",
        s(&out_dir.join("model.prakam")), "--out-dir", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("u0.TextGrid").exists());
}

/// Phone tier from (label, seconds) segments laid end to end.
fn phone_grid(segments: &[(String, f64)]) -> TextGrid {
    let mut at = 0.0;
    let mut intervals = Vec::new();
    for (label, d) in segments {
        intervals.push(Interval {
            xmin: at,
            xmax: at + d,
            text: label.clone(),
        });
        at += d;
    }
    TextGrid {
        xmin: 0.0,
        xmax: at,
        tiers: vec![Tier {
            name: PHONE_TIER.into(),
            xmin: 0.0,
            xmax: at,
            intervals,
        }],
    }
}

/// 100 reference phones of 0.05 s, with 0.15 s pauses after phones 20, 40
/// and 60. The hypothesis substitutes phones 10 and 30, drops phone 50 (49
/// absorbs its time), inserts "y" in the first half of phone 71's time and
/// moves phones 20, 40 and 60 into the following pause.
fn eval_fixture() -> (TextGrid, TextGrid) {
    let labels = ["a", "e", "i", "o", "u", "t", "k", "s", "m", "n"];
    let mut r = Vec::new();
    let mut h: Vec<(String, f64)> = Vec::new();
    for i in 0..100 {
        let l = labels[i % 10].to_string();
        r.push((l.clone(), 0.05));
        match i {
            10 | 30 => h.push(("x".into(), 0.05)),
            50 => h.last_mut().unwrap().1 += 0.05,
            71 => {
                h.push(("y".into(), 0.025));
                h.push((l, 0.025));
            }
            20 | 40 | 60 => {
                h.push((String::new(), 0.15));
                h.push((l, 0.05));
            }
            _ => h.push((l, 0.05)),
        }
        if [20, 40, 60].contains(&i) {
            r.push((String::new(), 0.15));
        }
    }
    (phone_grid(&r), phone_grid(&h))
}

#[test]
fn eval_fixture_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (r, h) = eval_fixture();
    let rp = dir.path().join("ref.TextGrid");
    let hp = dir.path().join("hyp.TextGrid");
    r.write(&rp).unwrap();
    h.write(&hp).unwrap();

    let out = prak(&["eval", "--ref", s(&rp), "--hyp", s(&hp)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = stdout(&out);
    for (name, v) in [
        ("phone mismatch", "4.00%"),
        ("misplacement 0.1s+", "3.00%"),
        ("misplacement 0.2s+", "0.00%"),
        ("mismatch or misplacement 0.1s+", "7.00%"),
    ] {
        let line = table.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.ends_with(v), "{line}");
    }

    let out = prak(&["eval", "--ref", s(&rp), "--ref", s(&rp), "--hyp", s(&rp), "--hyp", s(&rp), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout(&out);
    assert!(json.contains("\"ref_phone_count\": 200"), "{json}");
    assert!(json.contains("\"mismatch_or_misplace_0.1\": 0.0"), "{json}");

    let out = prak(&["eval", "--ref", s(&rp), "--hyp", s(&hp), "--hyp", s(&hp)]);
    assert_eq!(out.status.code(), Some(2));
}
