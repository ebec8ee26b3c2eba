//! Script histogram detection.

use std::collections::HashMap;

use unicode_general_category::{get_general_category, GeneralCategory as Gc};
use unicode_script::{Script, UnicodeScript};

use super::{LidError, LidPrediction, LidProvider};
use crate::lang;
use crate::model::UNDETERMINED;

/// Letters and combining marks count; Common and Inherited characters do not.
fn letter_script(c: char) -> Option<Script> {
    use Gc::*;
    let cat = get_general_category(c);
    let letterlike = matches!(
        cat,
        UppercaseLetter
            | LowercaseLetter
            | TitlecaseLetter
            | ModifierLetter
            | OtherLetter
            | NonspacingMark
            | SpacingMark
            | EnclosingMark
    );
    if !letterlike {
        return None;
    }
    match c.script() {
        Script::Common | Script::Inherited | Script::Unknown => None,
        s => Some(s),
    }
}

/// Per-script letter fractions, largest first, ties by script name.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptHistogram {
    pub letters: usize,
    pub fractions: Vec<(Script, f64)>,
}

impl ScriptHistogram {
    pub fn of(text: &str) -> Self {
        let mut counts: HashMap<Script, usize> = HashMap::new();
        let mut letters = 0;
        for s in text.chars().filter_map(letter_script) {
            *counts.entry(s).or_default() += 1;
            letters += 1;
        }
        let mut fractions: Vec<(Script, usize)> = counts.into_iter().collect();
        fractions.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.full_name().cmp(b.0.full_name())));
        ScriptHistogram {
            letters,
            fractions: fractions.into_iter().map(|(s, n)| (s, n as f64 / letters as f64)).collect(),
        }
    }

    pub fn fraction(&self, script: Script) -> f64 {
        self.fractions.iter().find(|(s, _)| *s == script).map_or(0.0, |(_, f)| *f)
    }

    pub fn dominant(&self) -> Option<(Script, f64)> {
        self.fractions.first().copied()
    }
}

/// Dominant script and its share of letters.
pub fn script_detect(text: &str) -> Result<(Script, f64), LidError> {
    if text.is_empty() {
        return Err(LidError::EmptyText);
    }
    ScriptHistogram::of(text).dominant().ok_or(LidError::NoLetters)
}

/// Emits a language only for scripts that exactly one supported language uses.
pub struct ScriptLid;

impl LidProvider for ScriptLid {
    fn id(&self) -> &str {
        "script"
    }

    fn classify(&self, text: &str) -> Result<LidPrediction, LidError> {
        let (script, fraction) = match script_detect(text) {
            Ok(d) => d,
            Err(LidError::NoLetters) => return Ok(LidPrediction::undetermined(self.id())),
            Err(e) => return Err(e),
        };
        Ok(match lang::unique_language(script) {
            Some(l) => LidPrediction { provider_id: self.id().into(), language: l.into(), confidence: fraction },
            None => LidPrediction {
                provider_id: self.id().into(),
                language: UNDETERMINED.into(),
                confidence: 0.0,
            },
        })
    }
}
