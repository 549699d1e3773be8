//! Vocabulary, verb–color–noun sentences, word-to-frame scheduling and the
//! masking curriculum.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::kinematics::Action;
use crate::scene::{ColorId, ShapeId};

pub const VOCAB_SIZE: usize = 21;
pub const ACTION_SLOTS: usize = 5;
pub const COLOR_BASE: u8 = 5;
pub const SHAPE_BASE: u8 = 11;
pub const NA: Token = Token(20);
pub const WORD_DURATION: f64 = 0.5;

/// Probabilities of one, two and three active mask flags.
pub const MASK_CLASS_PROBS: [f64; 3] = [0.15, 0.45, 0.40];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("token {0} is not a valid {1} word")]
    WrongSlot(u8, &'static str),
    #[error("token index {0} outside the 21-slot vocabulary")]
    OutOfRange(usize),
}

/// Index into the 21-unit language layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    Verb,
    Adjective,
    Noun,
    Reserved,
    NotApplicable,
}

impl Token {
    pub fn new(index: usize) -> Result<Self, VocabularyError> {
        if index < VOCAB_SIZE {
            Ok(Token(index as u8))
        } else {
            Err(VocabularyError::OutOfRange(index))
        }
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn action(a: Action) -> Self {
        Token(a.index() as u8)
    }

    pub fn color(c: ColorId) -> Self {
        Token(COLOR_BASE + c.index() as u8)
    }

    pub fn shape(s: ShapeId) -> Self {
        Token(SHAPE_BASE + s.index() as u8)
    }

    pub fn class(self) -> WordClass {
        match self.0 {
            0..=3 => WordClass::Verb,
            4 => WordClass::Reserved,
            5..=10 => WordClass::Adjective,
            11..=19 => WordClass::Noun,
            _ => WordClass::NotApplicable,
        }
    }

    pub fn word(self) -> &'static str {
        match self.class() {
            WordClass::Verb => Action::ALL[self.index()].phrase(),
            WordClass::Reserved => "<reserved>",
            WordClass::Adjective => ColorId::ALL[self.index() - COLOR_BASE as usize].name(),
            WordClass::Noun => ShapeId::ALL[self.index() - SHAPE_BASE as usize].name(),
            WordClass::NotApplicable => "n/a",
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Word of every slot, in slot order. Written into dataset headers.
pub fn vocabulary() -> Vec<&'static str> {
    (0..VOCAB_SIZE).map(|i| Token(i as u8).word()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub verb: Token,
    pub color: Token,
    pub noun: Token,
}

impl Sentence {
    pub fn tokens(&self) -> [Token; 3] {
        [self.verb, self.color, self.noun]
    }

    pub fn from_tokens(tokens: [Token; 3]) -> Result<Self, VocabularyError> {
        let [verb, color, noun] = tokens;
        if verb.class() != WordClass::Verb {
            return Err(VocabularyError::WrongSlot(verb.0, "verb"));
        }
        if color.class() != WordClass::Adjective {
            return Err(VocabularyError::WrongSlot(color.0, "color"));
        }
        if noun.class() != WordClass::Noun {
            return Err(VocabularyError::WrongSlot(noun.0, "noun"));
        }
        Ok(Self { verb, color, noun })
    }

    pub fn decode(&self) -> (Action, ColorId, ShapeId) {
        (
            Action::ALL[self.verb.index()],
            ColorId::ALL[self.color.index() - COLOR_BASE as usize],
            ShapeId::ALL[self.noun.index() - SHAPE_BASE as usize],
        )
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.verb, self.color, self.noun)
    }
}

pub fn build_sentence(action: Action, color: ColorId, shape: ShapeId) -> Sentence {
    Sentence { verb: Token::action(action), color: Token::color(color), noun: Token::shape(shape) }
}

/// Per-frame token over a whole episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordTrack(pub Vec<Token>);

impl WordTrack {
    pub fn all_na(len: usize) -> Self {
        Self(vec![NA; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// First frame (relative to speech onset) of word `k`. Boundaries are rounded
/// up so the three half-second words at 5 fps span 3, 2 and 3 frames.
fn word_boundary(k: usize, fps: f64, word_duration: f64) -> usize {
    let exact = k as f64 * fps * word_duration;
    // Guard against representation error pushing an integral product up.
    (exact - 1e-9).ceil().max(0.0) as usize
}

/// Number of speech frames for a three-word sentence.
pub fn speech_frames(fps: f64, word_duration: f64) -> usize {
    word_boundary(3, fps, word_duration)
}

/// Speech starts right after the motion phase; word k covers frames
/// `motion + ceil(k·fps·d) .. motion + ceil((k+1)·fps·d)`.
pub fn schedule_word_frames(sentence: &Sentence, motion_frames: usize, fps: f64, word_duration: f64) -> WordTrack {
    let total = motion_frames + speech_frames(fps, word_duration);
    let mut track = vec![NA; total];
    for (k, tok) in sentence.tokens().into_iter().enumerate() {
        let start = motion_frames + word_boundary(k, fps, word_duration);
        let end = motion_frames + word_boundary(k + 1, fps, word_duration);
        for slot in &mut track[start..end] {
            *slot = tok;
        }
    }
    WordTrack(track)
}

/// Which words of the sentence are kept: verb, adjective, noun.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MaskConfig {
    pub verb: bool,
    pub adjective: bool,
    pub noun: bool,
}

impl MaskConfig {
    pub const FULL: MaskConfig = MaskConfig { verb: true, adjective: true, noun: true };

    pub fn active_count(&self) -> usize {
        usize::from(self.verb) + usize::from(self.adjective) + usize::from(self.noun)
    }

    pub fn bits(&self) -> [f64; 3] {
        [self.verb, self.adjective, self.noun].map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn to_byte(self) -> u8 {
        u8::from(self.verb) | (u8::from(self.adjective) << 1) | (u8::from(self.noun) << 2)
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        (b < 8).then(|| Self { verb: b & 1 != 0, adjective: b & 2 != 0, noun: b & 4 != 0 })
    }

    pub fn keeps(&self, class: WordClass) -> bool {
        match class {
            WordClass::Verb => self.verb,
            WordClass::Adjective => self.adjective,
            WordClass::Noun => self.noun,
            WordClass::Reserved | WordClass::NotApplicable => true,
        }
    }
}

/// Draws the active-flag count from [`MASK_CLASS_PROBS`], then one of the
/// configurations with that count uniformly.
pub fn sample_mask_config(rng: &mut impl Rng) -> MaskConfig {
    let u: f64 = rng.gen();
    let count = if u < MASK_CLASS_PROBS[0] {
        1
    } else if u < MASK_CLASS_PROBS[0] + MASK_CLASS_PROBS[1] {
        2
    } else {
        3
    };
    match count {
        1 => {
            let which = rng.gen_range(0..3);
            MaskConfig { verb: which == 0, adjective: which == 1, noun: which == 2 }
        }
        2 => {
            let off = rng.gen_range(0..3);
            MaskConfig { verb: off != 0, adjective: off != 1, noun: off != 2 }
        }
        _ => MaskConfig::FULL,
    }
}

/// Replaces the words of inactive flags by "n/a".
pub fn apply_mask(track: &WordTrack, mask: MaskConfig) -> WordTrack {
    WordTrack(track.0.iter().map(|&t| if mask.keeps(t.class()) { t } else { NA }).collect())
}
