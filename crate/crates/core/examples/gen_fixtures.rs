//! Regenerates the checked-in test fixtures under `tests/fixtures`.
//!
//! ```text
//! cargo run -p setu-core --example gen_fixtures            # corpus, LID data, markdown
//! cargo run -p setu-core --example gen_fixtures -- golden  # golden summary from a reference run
//! ```
//!
//! Everything is drawn from a seeded ChaCha stream, so reruns are
//! byte-identical. Web records carry an `expected` metadata label naming
//! the stage and reasons that should first drop them, or `keep`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use setu::config::Config;
use setu::ocr::vision::parse_pages;
use setu::ocr::{process_pages, OcrFilterConfig};
use setu::pipeline::{self, PipelineSpec};

const HIN: &str = "मैं हम तुम आप वह यह वे ये है हैं था थे थी हो होगा और या लेकिन क्योंकि तो भी ही नहीं का की के को में से पर तक लिए साथ बारे घर गाँव शहर देश दुनिया लोग बच्चे किसान शिक्षक छात्र सरकार पानी खाना रोटी दूध फल सब्ज़ी नदी पहाड़ जंगल पेड़ फूल बारिश धूप मौसम सुबह शाम रात दिन साल महीना समय काम पढ़ाई किताब स्कूल बाज़ार दुकान रास्ता गाड़ी रेल सड़क अस्पताल डॉक्टर दवा स्वास्थ्य परिवार माता पिता भाई बहन दोस्त अच्छा बड़ा छोटा नया पुराना सुंदर ज़रूरी आसान मुश्किल बहुत कम ज़्यादा हमेशा कभी आज कल अब यहाँ वहाँ करना करते जाता जाते आता देखा सुना कहा लिखा पढ़ा खेलते बनाते मिलता चाहिए सकते रहते खेती फसल मेहनत त्योहार संगीत भाषा इतिहास विज्ञान तकनीक पैसा व्यापार उद्योग बिजली";
const TAM: &str = "நான் நாம் நீ நீங்கள் அவன் அவள் அவர் அது இது அவர்கள் ஒரு மற்றும் அல்லது ஆனால் ஏனெனில் இல்லை உண்டு இருக்கிறது இருந்தது வீடு ஊர் நகரம் நாடு உலகம் மக்கள் குழந்தைகள் விவசாயி ஆசிரியர் மாணவர் அரசு தண்ணீர் உணவு சோறு பால் பழம் காய்கறி ஆறு மலை காடு மரம் பூ மழை வெயில் காலை மாலை இரவு நாள் ஆண்டு மாதம் நேரம் வேலை படிப்பு புத்தகம் பள்ளி சந்தை கடை சாலை வண்டி ரயில் மருத்துவமனை மருத்துவர் மருந்து குடும்பம் அம்மா அப்பா அண்ணன் தங்கை நண்பன் நண்பா நல்ல பெரிய சிறிய புதிய பழைய அழகான முக்கியமான எளிய கடினமான மிகவும் குறைவு அதிகம் எப்போதும் இன்று நேற்று நாளை இப்போது இங்கே அங்கே செய்கிறார்கள் போகிறார் வருகிறார் பார்த்தேன் கேட்டேன் சொன்னார் எழுதினார் படித்தார் விளையாடுகிறார்கள் வாழ்கிறார்கள் வேண்டும் முடியும் விவசாயம் பயிர் உழைப்பு திருவிழா இசை மொழி வரலாறு அறிவியல் தொழில்நுட்பம் பணம் வணிகம் மின்சாரம் வணக்கம் தமிழ் கோவில்";
const ENG: &str = "the a an and or but because so also only not of to in on at for with from about by house village city country world people children farmer teacher student government water food bread milk fruit vegetables river mountain forest tree flower rain sunshine weather morning evening night day year month time work study book school market shop road car train street hospital doctor medicine health family mother father brother sister friend good big small new old beautiful important easy difficult very less more always sometimes today yesterday tomorrow now here there do make go come see hear say write read play build find must can live farming harvest effort festival music language history science technology money trade industry electricity we they she he it this that these those was were is are will";
const BEN: &str = "আমি আমরা তুমি সে এই ওই এবং কিন্তু না আছে ছিল বাড়ি গ্রাম শহর দেশ মানুষ শিশু কৃষক শিক্ষক জল খাবার ভাত মাছ নদী পাহাড় গাছ ফুল বৃষ্টি সকাল সন্ধ্যা রাত দিন বছর কাজ বই স্কুল বাজার রাস্তা পরিবার মা বাবা ভাই বোন বন্ধু ভালো বড় ছোট নতুন পুরনো সুন্দর খুব আজ কাল এখন এখানে করে যায় আসে দেখে বলে লেখে পড়ে ভাষা গান";
const GRE: &str = "και το η ο σε για με από είναι ήταν σπίτι χωριό πόλη χώρα κόσμος άνθρωποι παιδιά νερό ψωμί γάλα ποτάμι βουνό δάσος δέντρο λουλούδι βροχή πρωί βράδυ νύχτα μέρα χρόνος δουλειά βιβλίο σχολείο αγορά δρόμος";

/// Synthetic lexicon entries, one per script, that never occur in ordinary text.
const NSFW: [(&str, &[&str]); 3] = [
    ("hin", &["अश्लीलशब्द", "गंदाशब्द", "वर्जितशब्द"]),
    ("tam", &["ஆபாசச்சொல்", "கெட்டச்சொல்", "தடைச்சொல்"]),
    ("eng", &["xxbadword", "xxcurseword", "xxforbidden"]),
];

const SUCCESSORS: usize = 6;
const WEB_FILES: usize = 4;
const TOTAL_UNITS: usize = 1000;

struct Lang {
    code: &'static str,
    words: Vec<&'static str>,
    stop: &'static str,
}

impl Lang {
    fn new(code: &'static str, list: &'static str, stop: &'static str) -> Self {
        Lang { code, words: list.split_whitespace().collect(), stop }
    }

    /// Zipf-like draw: early words in the list are the frequent ones.
    fn word(&self, rng: &mut ChaCha8Rng) -> &'static str {
        let n = self.words.len() as f64;
        let u: f64 = rng.gen();
        let i = ((n + 1.0).powf(u) - 1.0) as usize;
        self.words[i.min(self.words.len() - 1)]
    }

    /// Sentences follow a sparse word-successor graph most of the time,
    /// which gives the language model real sequential structure to learn.
    fn sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.gen_range(6..=12);
        let n = self.words.len();
        let mut words: Vec<&str> = vec![self.word(rng)];
        while words.len() < len {
            let prev = self.words.iter().position(|w| *w == words[words.len() - 1]).unwrap();
            let next = if rng.gen_bool(0.8) {
                self.words[(prev * 31 + rng.gen_range(0..SUCCESSORS) * 17 + 3) % n]
            } else {
                self.word(rng)
            };
            words.push(next);
        }
        format!("{}{}", words.join(" "), self.stop)
    }

    fn paragraph(&self, rng: &mut ChaCha8Rng, lines: std::ops::RangeInclusive<usize>) -> Vec<String> {
        let n = rng.gen_range(lines);
        (0..n).map(|_| self.sentence(rng)).collect()
    }

    /// Word salad: vocabulary words drawn uniformly rather than by
    /// frequency, so the script and words are right but the statistics are not.
    fn salad(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.gen_range(6..=12);
        let words: Vec<&str> = (0..len).map(|_| *self.words.choose(rng).unwrap()).collect();
        format!("{}{}", words.join(" "), self.stop)
    }
}

fn langs() -> Vec<Lang> {
    vec![
        Lang::new("hin", HIN, "।"),
        Lang::new("tam", TAM, "."),
        Lang::new("eng", ENG, "."),
        Lang::new("ben", BEN, "।"),
        Lang::new("ell", GRE, "."),
    ]
}

fn lang<'a>(all: &'a [Lang], code: &str) -> &'a Lang {
    all.iter().find(|l| l.code == code).unwrap()
}

fn write(path: &Path, content: impl AsRef<[u8]>) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, content).unwrap();
}

fn jsonl(rows: &[serde_json::Value]) -> String {
    rows.iter().map(|r| format!("{r}\n")).collect()
}

fn web_record(id: &str, language: &str, text: &str, expected: &str) -> serde_json::Value {
    json!({
        "doc_id": id,
        "source": "web",
        "language": language,
        "text": text,
        "url": format!("https://example.org/{id}"),
        "metadata": {"expected": expected},
    })
}

// ---------------------------------------------------------------- OCR

/// A word with per-character symbols; symbols omit their own boxes,
/// which the reader treats as optional.
fn ocr_word(word: &str, x0: f64, x1: f64, y0: f64, y1: f64) -> serde_json::Value {
    let symbols: Vec<_> = word.chars().map(|c| json!({"text": c.to_string()})).collect();
    json!({"confidence": 0.96, "boundingBox": poly(x0, y0, x1, y1), "symbols": symbols})
}

fn poly(x0: f64, y0: f64, x1: f64, y1: f64) -> serde_json::Value {
    let r = |v: f64| (v * 1e4).round() / 1e4;
    json!({"normalizedVertices": [
        {"x": r(x0), "y": r(y0)}, {"x": r(x1), "y": r(y0)},
        {"x": r(x1), "y": r(y1)}, {"x": r(x0), "y": r(y1)},
    ]})
}

/// A block holding one paragraph of one sentence.
fn ocr_block(sentence: &str, bbox: (f64, f64, f64, f64), script: (&str, f64)) -> serde_json::Value {
    let (x0, y0, x1, y1) = bbox;
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let step = (x1 - x0) / words.len() as f64;
    let words: Vec<_> = words
        .iter()
        .enumerate()
        .map(|(i, w)| ocr_word(w, x0 + step * i as f64, x0 + step * (i as f64 + 0.9), y0, y1))
        .collect();
    let para = json!({
        "confidence": 0.95,
        "boundingBox": poly(x0, y0, x1, y1),
        "property": {"detectedLanguages": [{"languageCode": script.0, "confidence": script.1}]},
        "words": words,
    });
    json!({"confidence": 0.95, "boundingBox": poly(x0, y0, x1, y1), "paragraphs": [para]})
}

#[derive(Clone, Copy, PartialEq)]
enum PageKind {
    Good,
    HSparse,
    LowScript,
    Overlap,
    /// A duplicate small box inside a large one: suppressed, page kept.
    Contained,
}

fn ocr_page(l: &Lang, header: &str, kind: PageKind, number: u32, rng: &mut ChaCha8Rng) -> serde_json::Value {
    let script = match l.code {
        "hin" => "hi",
        "tam" => "ta",
        _ => "en",
    };
    let conf = if kind == PageKind::LowScript { 0.35 } else { 0.93 };
    let mut blocks = vec![ocr_block(header, (0.1, 0.02, 0.9, 0.07), (script, conf))];
    for i in 0..5 {
        let y0 = 0.1 + i as f64 * 0.17;
        let bbox = match kind {
            PageKind::HSparse if i % 2 == 0 => (0.02, y0, 0.2, y0 + 0.14),
            PageKind::HSparse => (0.8, y0, 0.98, y0 + 0.14),
            PageKind::Overlap => (0.1, 0.1 + i as f64 * 0.14, 0.9, 0.36 + i as f64 * 0.14),
            _ => (0.1, y0, 0.9, y0 + 0.14),
        };
        blocks.push(ocr_block(&l.sentence(rng), bbox, (script, conf)));
    }
    if kind == PageKind::Contained {
        blocks.push(ocr_block(&l.sentence(rng), (0.2, 0.12, 0.5, 0.2), (script, conf)));
    }
    let blocks = if kind == PageKind::HSparse { blocks[1..].to_vec() } else { blocks };
    json!({
        "fullTextAnnotation": {"pages": [{"width": 2480, "height": 3508, "blocks": blocks}]},
        "context": {"pageNumber": number},
    })
}

struct Pdf {
    id: &'static str,
    lang: &'static str,
    pages: u32,
    ppi: u32,
    images: Vec<(f64, f64)>,
    special: Vec<(u32, PageKind)>,
    corrupt: bool,
}

fn gen_ocr(all: &[Lang], dir: &Path, rng: &mut ChaCha8Rng) -> usize {
    let pdfs = vec![
        Pdf {
            id: "pdf-hin-01",
            lang: "hin",
            pages: 32,
            ppi: 300,
            images: vec![(0.1, 240.0)],
            special: vec![(10, PageKind::HSparse), (11, PageKind::LowScript), (20, PageKind::Contained)],
            corrupt: false,
        },
        Pdf {
            id: "pdf-tam-01",
            lang: "tam",
            pages: 28,
            ppi: 400,
            images: vec![],
            special: vec![(5, PageKind::Overlap), (17, PageKind::Contained), (26, PageKind::LowScript)],
            corrupt: false,
        },
        Pdf {
            id: "pdf-eng-01",
            lang: "eng",
            pages: 25,
            ppi: 300,
            images: vec![(0.49, 201.0)],
            special: vec![(3, PageKind::HSparse)],
            corrupt: false,
        },
        Pdf { id: "pdf-hin-02", lang: "hin", pages: 24, ppi: 300, images: vec![], special: vec![], corrupt: false },
        Pdf { id: "pdf-eng-02", lang: "eng", pages: 40, ppi: 299, images: vec![], special: vec![], corrupt: false },
        Pdf {
            id: "pdf-tam-02",
            lang: "tam",
            pages: 30,
            ppi: 300,
            images: vec![(0.2, 230.0), (0.5, 250.0)],
            special: vec![],
            corrupt: false,
        },
        Pdf {
            id: "pdf-hin-03",
            lang: "hin",
            pages: 30,
            ppi: 300,
            images: vec![(0.3, 200.0)],
            special: vec![],
            corrupt: false,
        },
        Pdf { id: "pdf-hin-04", lang: "hin", pages: 26, ppi: 300, images: vec![], special: vec![], corrupt: true },
    ];
    let mut meta = Vec::new();
    let mut units = 0;
    let rules = setu::ocr::TriageRules::default();
    for pdf in &pdfs {
        let m = setu::ocr::PdfMeta {
            pdf_id: pdf.id.into(),
            page_count: pdf.pages,
            ppi: pdf.ppi,
            image_pages_sampled: pdf.images.clone(),
        };
        meta.push(serde_json::to_value(&m).unwrap());
        let l = lang(all, pdf.lang);
        let header = match pdf.lang {
            "hin" => "अध्याय एक परिचय",
            "tam" => "முதல் பாடம் அறிமுகம்",
            _ => "Chapter One Introduction",
        };
        let path = dir.join(format!("{}.json", pdf.id));
        if pdf.corrupt {
            write(&path, "{\"responses\": [");
            units += 1;
            continue;
        }
        let responses: Vec<_> = (1..=pdf.pages)
            .map(|p| {
                let kind = pdf.special.iter().find(|(n, _)| *n == p).map_or(PageKind::Good, |(_, k)| *k);
                ocr_page(l, header, kind, p, rng)
            })
            .collect();
        let body = serde_json::to_string(&json!({"responses": responses})).unwrap();
        write(&path, &body);
        if setu::ocr::triage_pdf(&m, &rules) != setu::ocr::TriageVerdict::Accept {
            units += 1;
            continue;
        }
        let pages = parse_pages(&body).unwrap();
        let (docs, _) = process_pages(&pages, &OcrFilterConfig::default(), pdf.id);
        units += docs.len().max(1);
    }
    write(&dir.join("pdf_meta.jsonl"), jsonl(&meta));
    units
}

// ---------------------------------------------------------------- speech

fn srt_time(ms: u64) -> String {
    format!("{:02}:{:02}:{:02},{:03}", ms / 3_600_000, ms / 60_000 % 60, ms / 1000 % 60, ms % 1000)
}

fn gen_srt(all: &[Lang], dir: &Path, rng: &mut ChaCha8Rng) -> usize {
    let mut n = 0;
    let plan: [(&str, usize); 2] = [("hin", 30), ("eng", 28)];
    for (code, count) in plan {
        let l = lang(all, code);
        for i in 0..count {
            let mut s = String::new();
            let mut t = rng.gen_range(0..5_000u64);
            let cues = rng.gen_range(6..=14);
            for c in 1..=cues {
                let dur = rng.gen_range(1_500..4_000u64);
                if c == 3 && i % 7 == 0 {
                    // Malformed timing line.
                    let _ = write!(s, "{c}\n00:00:xx --> 00:00:05,000\n{}\n\n", l.sentence(rng));
                } else {
                    let mut text = l.sentence(rng);
                    if c == 1 && i % 3 == 0 {
                        text = format!("[music]\n<i>{text}</i>");
                    }
                    let _ = write!(s, "{c}\n{} --> {}\n{text}\n\n", srt_time(t), srt_time(t + dur));
                }
                t += dur + rng.gen_range(100..900);
            }
            write(&dir.join(format!("{code}-{i:03}.srt")), s);
            n += 1;
        }
    }
    // Files with nothing usable.
    write(&dir.join("empty-000.srt"), "1\n00:00:01,000 --> 00:00:02,000\n[applause]\n\n");
    write(&dir.join("empty-001.srt"), "garbage without cues\n");
    n + 2
}

fn gen_asr(all: &[Lang], dir: &Path, rng: &mut ChaCha8Rng) -> usize {
    let mut rows = Vec::new();
    let media = 20;
    for m in 0..media {
        let l = lang(all, if m % 2 == 0 { "tam" } else { "hin" });
        let id = format!("talk-{m:03}");
        let chunks = rng.gen_range(3..=8);
        let mut orders: Vec<u32> = (0..chunks).collect();
        orders.shuffle(rng);
        if m == 7 {
            orders[1] = orders[0];
        }
        for o in orders {
            let words: String = l.sentence(rng).trim_end_matches(l.stop).to_string();
            rows.push(json!({"media_id": id, "order": o, "text": words}));
        }
    }
    write(&dir.join("chunks.jsonl"), jsonl(&rows));
    media
}

// ---------------------------------------------------------------- web

fn lines_text(lines: &[String]) -> String {
    lines.join("\n")
}

fn gen_web(all: &[Lang], dir: &Path, count: usize, rng: &mut ChaCha8Rng) {
    let mut rows: Vec<serde_json::Value> = Vec::new();
    let mut originals: Vec<(String, String, Vec<String>)> = Vec::new();
    let mut next = 0usize;
    let mut id = |prefix: &str| {
        next += 1;
        format!("web-{prefix}-{next:04}")
    };
    let main = ["hin", "tam", "eng"];
    let nav = ["Home | About | Contact", "Login", "Share on Facebook", "Menu", "© 2023 All rights reserved"];

    let push_good = |rows: &mut Vec<_>, originals: &mut Vec<_>, code: &str, id: String, rng: &mut ChaCha8Rng| {
        let l = lang(all, code);
        let lines = l.paragraph(rng, 4..=9);
        rows.push(web_record(&id, code, &lines_text(&lines), "keep"));
        originals.push((id, code.to_string(), lines));
    };

    // Near-duplicates and exact copies are added last; reserve room.
    let fixed = 9 + 10 + 10 + 8 + 15 + 10 + 10 + 10 + 15 + 24 + 30 + 30 + 40 + 10 + 3;
    let good = count - fixed;
    for i in 0..good {
        let code = match i % 20 {
            0..=8 => "hin",
            9..=14 => "tam",
            _ => "eng",
        };
        push_good(&mut rows, &mut originals, code, id(code), rng);
    }
    // Noise lines and markup that cleaning removes; the documents survive.
    for i in 0..30 {
        let code = main[i % 3];
        let l = lang(all, code);
        let mut lines = l.paragraph(rng, 4..=8);
        lines.insert(0, nav[i % nav.len()].to_string());
        lines.push(nav[(i + 2) % nav.len()].to_string());
        let did = id(code);
        rows.push(web_record(&did, code, &lines_text(&lines), "keep"));
    }
    for i in 0..30 {
        let code = main[i % 3];
        let l = lang(all, code);
        let mut lines = l.paragraph(rng, 4..=8);
        lines[1] = format!("<span class=\"x\">{}</span>", lines[1]);
        lines.insert(2, "var tracker = init(42);".to_string());
        lines.push("function track(a) { return a * 2; }".to_string());
        let did = id(code);
        rows.push(web_record(&did, code, &lines_text(&lines), "keep"));
    }
    // Nothing left after cleaning.
    for i in 0..9 {
        let text = format!("{}\n{}\nvar x = {};\n12345", nav[i % nav.len()], nav[(i + 1) % nav.len()], i);
        let did = id("nav");
        rows.push(web_record(&did, "eng", &text, "clean:empty_after_clean"));
    }
    // Symbol-heavy: letters present, but symbols dominate.
    for i in 0..10 {
        let l = lang(all, main[i % 3]);
        let lines: Vec<String> = (0..4).map(|_| format!("{} ₹₹₹ ### @@@ %%% *** +++ === ~~~ ^^^ $$$ &&& ///.", l.word(rng))).collect();
        let did = id("sym");
        rows.push(web_record(&did, l.code, &lines_text(&lines), "clean:symbol_heavy"));
    }
    // Unselected and unidentifiable languages.
    for _ in 0..10 {
        let l = lang(all, "ben");
        let lines = l.paragraph(rng, 5..=5);
        let did = id("ben");
        rows.push(web_record(&did, "ben", &lines_text(&lines), "lid:language_not_selected"));
    }
    for _ in 0..8 {
        let l = lang(all, "ell");
        let lines = l.paragraph(rng, 5..=5);
        let did = id("ell");
        rows.push(web_record(&did, "und", &lines_text(&lines), "lid:undetermined_language"));
    }
    // Flag failures.
    for i in 0..15 {
        let l = lang(all, main[i % 3]);
        let did = id("short");
        rows.push(web_record(&did, l.code, &l.sentence(rng), "flag:line_count"));
    }
    for i in 0..10 {
        let l = lang(all, main[i % 3]);
        let lines: Vec<String> = (0..14).map(|_| format!("{} {}{}", l.word(rng), l.word(rng), l.stop)).collect();
        let did = id("terse");
        rows.push(web_record(&did, l.code, &lines_text(&lines), "flag:mean_line_len"));
    }
    for i in 0..10 {
        let code = main[i % 3];
        let l = lang(all, code);
        let bad = NSFW.iter().find(|(c, _)| *c == code).unwrap().1;
        let mut lines = l.paragraph(rng, 6..=6);
        for (j, line) in lines.iter_mut().enumerate().take(3) {
            *line = format!("{} {line}", bad[j % bad.len()]);
        }
        let did = id("nsfw");
        rows.push(web_record(&did, code, &lines_text(&lines), "flag:nsfw_ratio"));
    }
    for _ in 0..10 {
        // Hindi with a heavy share of Han characters.
        let h = lang(all, "hin");
        let mut lines = h.paragraph(rng, 5..=5);
        for _ in 0..2 {
            let han: String = (0..30).map(|_| char::from_u32(rng.gen_range(0x4e00..0x4e80)).unwrap()).collect();
            lines.insert(2, format!("{han}।"));
        }
        let did = id("mixed");
        rows.push(web_record(&did, "hin", &lines_text(&lines), "flag:non_li_ratio"));
    }
    for i in 0..15 {
        let l = lang(all, main[i % 3]);
        let s = l.sentence(rng);
        let lines: Vec<String> = (0..10).map(|_| s.clone()).collect();
        let did = id("spam");
        rows.push(web_record(&did, l.code, &lines_text(&lines), "flag:char_rep+word_rep"));
    }
    // Right words, wrong statistics: survives the heuristics, scored by the LM.
    for i in 0..24 {
        let l = lang(all, main[i % 3]);
        let lines: Vec<String> = (0..6).map(|_| l.salad(rng)).collect();
        let did = id("salad");
        rows.push(web_record(&did, l.code, &lines_text(&lines), "keep:salad"));
    }
    // Invalid records.
    let mut raw_bad = vec![
        "{\"doc_id\": \"web-bad-1\", \"text\": ".to_string(),
        json!({"doc_id": "web-bad-2", "language": "xx1", "text": "x"}).to_string(),
        json!({"doc_id": "web-bad-3", "source": "web"}).to_string(),
    ];

    // Near-duplicates: one line replaced; exact copies. Later ids lose.
    let mut dup_rows = Vec::new();
    let picks: Vec<usize> = {
        let mut idx: Vec<usize> = (0..originals.len()).filter(|&i| originals[i].2.len() >= 6).collect();
        idx.shuffle(rng);
        idx.into_iter().take(50).collect()
    };
    for (k, &p) in picks.iter().enumerate() {
        let (oid, code, lines) = &originals[p];
        let mut lines = lines.clone();
        if k < 40 {
            let j = rng.gen_range(0..lines.len());
            let mut words: Vec<&str> = lines[j].split(' ').collect();
            let w = rng.gen_range(0..words.len() - 1);
            words[w] = lang(all, code).word(rng);
            lines[j] = words.join(" ");
        }
        let did = format!("{oid}-copy");
        dup_rows.push(web_record(&did, code, &lines_text(&lines), "dedup:fuzzy_duplicate"));
    }
    rows.extend(dup_rows);
    rows.shuffle(rng);
    assert_eq!(rows.len() + raw_bad.len(), count, "web record count");

    let per = rows.len().div_ceil(WEB_FILES);
    for (f, chunk) in rows.chunks(per).enumerate() {
        let mut text = jsonl(chunk);
        if let Some(bad) = raw_bad.pop() {
            text.push_str(&bad);
            text.push('\n');
        }
        write(&dir.join(format!("part-{f:02}.jsonl")), text);
    }
}

// ---------------------------------------------------------------- LID, markdown, config

fn gen_lid(all: &[Lang], path: &Path, rng: &mut ChaCha8Rng) {
    let plan = [("hin", 300), ("tam", 300), ("eng", 250), ("ben", 150)];
    let mut rows = Vec::new();
    for (code, n) in plan {
        let l = lang(all, code);
        for _ in 0..n {
            rows.push(json!({"language": code, "text": l.sentence(rng)}));
        }
    }
    write(path, jsonl(&rows));
}

fn md_inline(l: &Lang, rng: &mut ChaCha8Rng) -> String {
    let mut s = l.sentence(rng);
    match rng.gen_range(0..6) {
        0 => s = format!("`let x = {};` {s}", rng.gen_range(0..100)),
        1 => s = format!("**{}** {s}", l.word(rng)),
        2 => s = format!("{s} [link](https://example.org/{}) {}", rng.gen_range(0..100), l.sentence(rng)),
        3 => s = format!("{s} ``a ` b`` {}", l.sentence(rng)),
        4 => s = format!("_{}_ {s} {}", l.word(rng), l.sentence(rng)),
        _ => {}
    }
    s
}

fn gen_markdown(all: &[Lang], path: &Path, rng: &mut ChaCha8Rng) {
    let mut rows = Vec::new();
    for i in 0..200 {
        let l = &all[i % 3];
        let mut md = String::new();
        let _ = writeln!(md, "# {}", l.sentence(rng).trim_end_matches(l.stop));
        md.push('\n');
        for _ in 0..rng.gen_range(3..=7) {
            match rng.gen_range(0..8) {
                0 => {
                    for k in 0..rng.gen_range(2..5) {
                        let _ = writeln!(md, "- {}", md_inline(l, rng));
                        if k == 0 {
                            let _ = writeln!(md, "  - [ ] {}", l.sentence(rng));
                        }
                    }
                }
                1 => {
                    for k in 1..=rng.gen_range(2..4) {
                        let _ = writeln!(md, "{k}. {}", md_inline(l, rng));
                    }
                }
                2 => {
                    let _ = writeln!(md, "```rust\nfn main() {{ println!(\"{}\"); }}\n```", l.word(rng));
                }
                3 => {
                    let _ = writeln!(md, "> {}", md_inline(l, rng));
                }
                4 => {
                    let _ = writeln!(md, "| {} | {} |\n|---|---|\n| {} | {} |", l.word(rng), l.word(rng), l.sentence(rng), 42);
                }
                5 => {
                    let _ = writeln!(md, "![{}](img/{i}.png)\n\n<br/>", l.word(rng));
                }
                6 => {
                    let _ = writeln!(md, "## {}", l.sentence(rng));
                }
                _ => {
                    let _ = writeln!(md, "{} {}", md_inline(l, rng), md_inline(l, rng));
                }
            }
            md.push('\n');
        }
        if i % 5 == 0 {
            md.push_str("    indented code block\n\n~~~\nraw ~~~ fence\n~~~\n");
        }
        if i % 7 == 0 {
            md = md.replace('\n', "\r\n");
        }
        rows.push(json!({"doc_id": format!("md-{i:03}"), "language": l.code, "text": md}));
    }
    write(path, jsonl(&rows));
}

const CONFIG: &str = r#"# Fixture configuration used by the integration and acceptance tests.
seed = 7
shard_size = 100

[lid]
training_data = "lid_train.jsonl"

[lm]
vocab_size = 600
train_docs = 1000
validation_docs = 60
min_train_docs = 20

[languages.hin]
nsfw_lexicon = "lexicons/hin.txt"

[languages.tam]
nsfw_lexicon = "lexicons/tam.txt"

[languages.eng]
nsfw_lexicon = "lexicons/eng.txt"
"#;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn generate(root: &Path) {
    let all = langs();
    let mut rng = ChaCha8Rng::seed_from_u64(20231);
    let corpus = root.join("corpus");
    let _ = std::fs::remove_dir_all(&corpus);
    let ocr_units = gen_ocr(&all, &corpus.join("ocr"), &mut rng);
    let srt_units = gen_srt(&all, &corpus.join("srt"), &mut rng);
    let asr_units = gen_asr(&all, &corpus.join("asr"), &mut rng);
    gen_web(&all, &corpus.join("web"), TOTAL_UNITS - ocr_units - srt_units - asr_units, &mut rng);
    gen_lid(&all, &root.join("lid_train.jsonl"), &mut rng);
    gen_markdown(&all, &root.join("markdown.jsonl"), &mut rng);
    for (code, words) in NSFW {
        write(&root.join(format!("lexicons/{code}.txt")), format!("# synthetic entries\n{}\n", words.join("\n")));
    }
    write(&root.join("config.toml"), CONFIG);
    println!("units: ocr {ocr_units}, srt {srt_units}, asr {asr_units}");
}

fn golden(root: &Path) {
    let cfg = Config::load(&root.join("config.toml")).unwrap();
    let out = tempfile_dir();
    let mut spec = PipelineSpec::full(root.join("corpus"), &out);
    spec.languages = vec!["eng".into(), "hin".into(), "tam".into()];
    let report = pipeline::run(&spec, &cfg).unwrap();
    write(&root.join("golden_summary.json"), pipeline::to_pretty_json(&report.summary));
    println!("{}", String::from_utf8(pipeline::to_pretty_json(&report.summary)).unwrap());
    let _ = std::fs::remove_dir_all(&out);
}

fn tempfile_dir() -> PathBuf {
    let p = std::env::temp_dir().join(format!("setu-golden-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    p
}

fn main() {
    let root = fixtures_dir();
    match std::env::args().nth(1).as_deref() {
        Some("golden") => golden(&root),
        _ => generate(&root),
    }
}
