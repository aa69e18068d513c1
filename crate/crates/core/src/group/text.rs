//! Canonical text forms.
//!
//! Lamplighter elements print as `[(x,y,z):v, …]@(px,py,pz)` with sites in
//! lexicographic order; free words print as generator names (`x1X2`), with
//! `e` for the empty word.

use std::fmt;
use std::str::FromStr;

use super::{FreeWord, GroupError, LamplighterElement, Site};

fn write_site(f: &mut fmt::Formatter<'_>, s: &[i64]) -> fmt::Result {
    f.write_str("(")?;
    for (i, x) in s.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    f.write_str(")")
}

impl fmt::Display for LamplighterElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (s, v)) in self.lamps().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_site(f, s)?;
            write!(f, ":{v}")?;
        }
        f.write_str("]@")?;
        write_site(f, self.pos())
    }
}

fn parse_site(s: &str) -> Option<Site> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    inner
        .split(',')
        .map(|x| x.trim().parse::<i64>().ok())
        .collect()
}

impl FromStr for LamplighterElement {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || GroupError::Parse(s.to_string());
        let (lamps, pos) = s.trim().rsplit_once("]@").ok_or_else(err)?;
        let lamps = lamps.strip_prefix('[').ok_or_else(err)?;
        let pos = parse_site(pos).ok_or_else(err)?;
        let mut entries = Vec::new();
        let mut rest = lamps.trim();
        while !rest.is_empty() {
            let close = rest.find(')').ok_or_else(err)?;
            let site = parse_site(&rest[..=close]).ok_or_else(err)?;
            let tail = rest[close + 1..].strip_prefix(':').ok_or_else(err)?;
            let (value, next) = tail.split_once(',').unwrap_or((tail, ""));
            let value: u32 = value.trim().parse().map_err(|_| err())?;
            if value == 0 || site.len() != pos.len() {
                return Err(err());
            }
            entries.push((site, value));
            rest = next.trim_start();
            if rest.is_empty() && !next.is_empty() {
                return Err(err());
            }
        }
        let n = entries.len();
        let e = LamplighterElement::from_parts(entries, pos);
        if e.lamps().len() != n {
            return Err(err());
        }
        Ok(e)
    }
}

impl fmt::Display for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("e");
        }
        for &l in self.letters() {
            let c = if l > 0 { 'x' } else { 'X' };
            write!(f, "{c}{}", l.unsigned_abs())?;
        }
        Ok(())
    }
}

impl FromStr for FreeWord {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "e" {
            return Ok(FreeWord::empty());
        }
        let err = || GroupError::Parse(s.to_string());
        let mut letters = Vec::new();
        let mut chars = s.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            let sign = match c {
                'x' => 1,
                'X' => -1,
                _ => return Err(err()),
            };
            let mut end = start + 1;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_digit() {
                    end = i + 1;
                    chars.next();
                } else {
                    break;
                }
            }
            let k: i32 = s[start + 1..end].parse().map_err(|_| err())?;
            if k == 0 {
                return Err(err());
            }
            letters.push(sign * k);
        }
        if letters.is_empty() {
            return Err(err());
        }
        FreeWord::new(letters)
    }
}
