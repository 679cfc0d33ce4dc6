//! Porter stemmer, original 1980 rule set.
//!
//! Every word is run through all steps, including words of one or two
//! letters. Rule lists are ordered so the longest matching suffix wins; once
//! a suffix matches, a failed condition ends the step.

struct Word {
    chars: Vec<char>,
}

enum Cond {
    Always,
    MeasurePositive,
    ContainsVowel,
}

impl Word {
    fn is_consonant(w: &[char], i: usize) -> bool {
        match w[i] {
            'a' | 'e' | 'i' | 'o' | 'u' => false,
            'y' => i == 0 || !Self::is_consonant(w, i - 1),
            _ => true,
        }
    }

    /// Number of VC sequences in `[C](VC)^m[V]`.
    fn measure(w: &[char]) -> usize {
        let mut m = 0;
        let mut prev_vowel = false;
        for i in 0..w.len() {
            let c = Self::is_consonant(w, i);
            if c && prev_vowel {
                m += 1;
            }
            prev_vowel = !c;
        }
        m
    }

    fn contains_vowel(w: &[char]) -> bool {
        (0..w.len()).any(|i| !Self::is_consonant(w, i))
    }

    fn ends_double_consonant(w: &[char]) -> bool {
        let n = w.len();
        n >= 2 && w[n - 1] == w[n - 2] && Self::is_consonant(w, n - 1)
    }

    /// consonant-vowel-consonant ending, last letter not w, x or y.
    fn ends_cvc(w: &[char]) -> bool {
        let n = w.len();
        n >= 3
            && Self::is_consonant(w, n - 3)
            && !Self::is_consonant(w, n - 2)
            && Self::is_consonant(w, n - 1)
            && !matches!(w[n - 1], 'w' | 'x' | 'y')
    }

    fn ends_with(&self, suffix: &str) -> bool {
        let s: Vec<char> = suffix.chars().collect();
        self.chars.len() >= s.len() && self.chars[self.chars.len() - s.len()..] == s[..]
    }

    fn stem_without(&self, suffix: &str) -> Vec<char> {
        self.chars[..self.chars.len() - suffix.chars().count()].to_vec()
    }

    fn holds(cond: &Cond, stem: &[char]) -> bool {
        match cond {
            Cond::Always => true,
            Cond::MeasurePositive => Self::measure(stem) > 0,
            Cond::ContainsVowel => Self::contains_vowel(stem),
        }
    }

    fn apply(&mut self, rules: &[(&str, &str, Cond)]) {
        for (suffix, replacement, cond) in rules {
            if self.ends_with(suffix) {
                let mut stem = self.stem_without(suffix);
                if Self::holds(cond, &stem) {
                    stem.extend(replacement.chars());
                    self.chars = stem;
                }
                return;
            }
        }
    }

    fn step1a(&mut self) {
        self.apply(&[
            ("sses", "ss", Cond::Always),
            ("ies", "i", Cond::Always),
            ("ss", "ss", Cond::Always),
            ("s", "", Cond::Always),
        ]);
    }

    fn step1b(&mut self) {
        if self.ends_with("eed") {
            let stem = self.stem_without("eed");
            if Self::measure(&stem) > 0 {
                self.chars.pop();
            }
            return;
        }
        let mut base = None;
        for suffix in ["ed", "ing"] {
            if self.ends_with(suffix) {
                let stem = self.stem_without(suffix);
                if Self::contains_vowel(&stem) {
                    base = Some(stem);
                    break;
                }
            }
        }
        let Some(stem) = base else { return };
        self.chars = stem;
        if self.ends_with("at") || self.ends_with("bl") || self.ends_with("iz") {
            self.chars.push('e');
        } else if Self::ends_double_consonant(&self.chars) {
            if !matches!(self.chars.last(), Some('l' | 's' | 'z')) {
                self.chars.pop();
            }
        } else if Self::measure(&self.chars) == 1 && Self::ends_cvc(&self.chars) {
            self.chars.push('e');
        }
    }

    fn step1c(&mut self) {
        self.apply(&[("y", "i", Cond::ContainsVowel)]);
    }

    fn step2(&mut self) {
        use Cond::MeasurePositive as P;
        self.apply(&[
            ("ational", "ate", P),
            ("tional", "tion", P),
            ("enci", "ence", P),
            ("anci", "ance", P),
            ("izer", "ize", P),
            ("abli", "able", P),
            ("alli", "al", P),
            ("entli", "ent", P),
            ("eli", "e", P),
            ("ousli", "ous", P),
            ("ization", "ize", P),
            ("ation", "ate", P),
            ("ator", "ate", P),
            ("alism", "al", P),
            ("iveness", "ive", P),
            ("fulness", "ful", P),
            ("ousness", "ous", P),
            ("aliti", "al", P),
            ("iviti", "ive", P),
            ("biliti", "ble", P),
        ]);
    }

    fn step3(&mut self) {
        use Cond::MeasurePositive as P;
        self.apply(&[
            ("icate", "ic", P),
            ("ative", "", P),
            ("alize", "al", P),
            ("iciti", "ic", P),
            ("ical", "ic", P),
            ("ful", "", P),
            ("ness", "", P),
        ]);
    }

    fn step4(&mut self) {
        const SUFFIXES: [&str; 19] = [
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ion", "ou", "ism", "ate",
            "iti", "ous", "ive", "ize",
        ];
        for suffix in SUFFIXES {
            if self.ends_with(suffix) {
                let stem = self.stem_without(suffix);
                let ok = Self::measure(&stem) > 1 && (suffix != "ion" || matches!(stem.last(), Some('s' | 't')));
                if ok {
                    self.chars = stem;
                }
                return;
            }
        }
    }

    fn step5a(&mut self) {
        if self.ends_with("e") {
            let stem = self.stem_without("e");
            let m = Self::measure(&stem);
            if m > 1 || (m == 1 && !Self::ends_cvc(&stem)) {
                self.chars = stem;
            }
        }
    }

    fn step5b(&mut self) {
        if self.ends_with("ll") && Self::measure(&self.chars[..self.chars.len() - 1]) > 1 {
            self.chars.pop();
        }
    }
}

/// Stems one lowercase word.
pub fn stem(word: &str) -> String {
    let mut w = Word {
        chars: word.to_lowercase().chars().collect(),
    };
    if w.chars.is_empty() {
        return String::new();
    }
    w.step1a();
    w.step1b();
    w.step1c();
    w.step2();
    w.step3();
    w.step4();
    w.step5a();
    w.step5b();
    w.chars.into_iter().collect()
}
