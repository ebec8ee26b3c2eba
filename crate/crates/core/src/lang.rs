//! Language ↔ script tables for the supported Indic languages and English.

use unicode_script::Script;

/// (ISO 639-3 code, scripts). The first script is the canonical one.
const LANGUAGES: &[(&str, &[Script])] = &[
    ("asm", &[Script::Bengali]),
    ("ben", &[Script::Bengali]),
    ("brx", &[Script::Devanagari]),
    ("doi", &[Script::Devanagari]),
    ("eng", &[Script::Latin]),
    ("guj", &[Script::Gujarati]),
    ("hin", &[Script::Devanagari]),
    ("kan", &[Script::Kannada]),
    ("kas", &[Script::Arabic, Script::Devanagari]),
    ("kok", &[Script::Devanagari]),
    ("mai", &[Script::Devanagari]),
    ("mal", &[Script::Malayalam]),
    ("mar", &[Script::Devanagari]),
    ("mni", &[Script::Bengali, Script::Meetei_Mayek]),
    ("nep", &[Script::Devanagari]),
    ("ori", &[Script::Oriya]),
    ("pan", &[Script::Gurmukhi]),
    ("san", &[Script::Devanagari]),
    ("sat", &[Script::Ol_Chiki]),
    ("snd", &[Script::Arabic, Script::Devanagari]),
    ("tam", &[Script::Tamil]),
    ("tel", &[Script::Telugu]),
    ("urd", &[Script::Arabic]),
];

pub fn scripts_of(lang: &str) -> Option<&'static [Script]> {
    LANGUAGES.iter().find(|(code, _)| *code == lang).map(|(_, s)| *s)
}

pub fn canonical_script(lang: &str) -> Option<Script> {
    scripts_of(lang).map(|s| s[0])
}

/// The single supported language written in `script`, if exactly one is.
pub fn unique_language(script: Script) -> Option<&'static str> {
    let mut hits = LANGUAGES.iter().filter(|(_, scripts)| scripts.contains(&script));
    let first = hits.next()?;
    if hits.next().is_some() {
        None
    } else {
        Some(first.0)
    }
}

pub fn supported_languages() -> impl Iterator<Item = &'static str> {
    LANGUAGES.iter().map(|(c, _)| *c)
}

pub fn parse_script(name: &str) -> Option<Script> {
    Script::from_full_name(name).or_else(|| Script::from_short_name(name))
}
