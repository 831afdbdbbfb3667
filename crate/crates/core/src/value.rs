// Copyright 2026 The Vexlog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Scalar values and their fixed-width cell encoding.
//!
//! Every column cell is a `u64`. The encoding is order preserving: comparing
//! two encoded cells of the same kind as plain integers gives the same answer
//! as comparing the decoded values (floats use IEEE total order). Sorting,
//! merging and hashing therefore never need to know column kinds.

use std::collections::HashMap;
use std::fmt;

/// Encoded column cell.
pub type Cell = u64;

const SIGN: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKind {
    Int,
    Float,
    Symbol,
}

impl ValueKind {
    /// Maps a surface type name onto a value kind.
    pub fn from_type_name(name: &str) -> Option<ValueKind> {
        match name {
            "i8" | "i16" | "i32" | "i64" | "isize" | "u8" | "u16" | "u32" | "u64" | "usize"
            | "bool" | "int" => Some(ValueKind::Int),
            "f32" | "f64" | "float" => Some(ValueKind::Float),
            "String" | "string" | "Symbol" | "symbol" | "str" => Some(ValueKind::Symbol),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Int => "int",
            ValueKind::Float => "float",
            ValueKind::Symbol => "symbol",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Symbol(u32),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Int(_) => ValueKind::Int,
            Value::Float(_) => ValueKind::Float,
            Value::Symbol(_) => ValueKind::Symbol,
        }
    }

    pub fn to_cell(self) -> Cell {
        match self {
            Value::Int(v) => (v as u64) ^ SIGN,
            Value::Float(v) => {
                let bits = v.to_bits();
                if bits & SIGN != 0 {
                    !bits
                } else {
                    bits | SIGN
                }
            }
            Value::Symbol(id) => id as u64,
        }
    }

    pub fn from_cell(kind: ValueKind, cell: Cell) -> Value {
        match kind {
            ValueKind::Int => Value::Int((cell ^ SIGN) as i64),
            ValueKind::Float => {
                let bits = if cell & SIGN != 0 { cell & !SIGN } else { !cell };
                Value::Float(f64::from_bits(bits))
            }
            ValueKind::Symbol => Value::Symbol(cell as u32),
        }
    }

    pub fn as_bool(&self) -> bool {
        match *self {
            Value::Int(v) => v != 0,
            Value::Float(v) => v != 0.0,
            Value::Symbol(_) => true,
        }
    }

    pub fn from_bool(b: bool) -> Value {
        Value::Int(b as i64)
    }

    /// Renders the value, resolving symbols through `symbols`.
    pub fn render(&self, symbols: &SymbolTable) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format_float(*v),
            Value::Symbol(id) => symbols.resolve(*id).unwrap_or("?").to_string(),
        }
    }
}

/// Shortest round-trip float rendering that always carries a decimal point.
pub fn format_float(v: f64) -> String {
    let s = format!("{v}");
    if v.is_finite() && !s.contains(['.', 'e', 'E']) {
        format!("{s}.0")
    } else {
        s
    }
}

/// Dense string interner; ids start at 0.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    strings: Vec<String>,
    ids: HashMap<String, u32>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.strings.len() as u32;
        self.strings.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    pub fn lookup(&self, s: &str) -> Option<u32> {
        self.ids.get(s).copied()
    }

    pub fn resolve(&self, id: u32) -> Option<&str> {
        self.strings.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

/// Parses a textual token into a value of the given kind.
pub fn parse_value(kind: ValueKind, token: &str, symbols: &mut SymbolTable) -> Option<Value> {
    match kind {
        ValueKind::Int => token.parse::<i64>().ok().map(Value::Int),
        ValueKind::Float => token.parse::<f64>().ok().map(Value::Float),
        ValueKind::Symbol => {
            let s = token
                .strip_prefix('"')
                .and_then(|t| t.strip_suffix('"'))
                .unwrap_or(token);
            Some(Value::Symbol(symbols.intern(s)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_rendering_keeps_a_point() {
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(0.25), "0.25");
    }

    #[test]
    fn symbols_are_dense() {
        let mut t = SymbolTable::new();
        assert_eq!(t.intern("a"), 0);
        assert_eq!(t.intern("b"), 1);
        assert_eq!(t.intern("a"), 0);
        assert_eq!(t.resolve(1), Some("b"));
    }

    proptest! {
        #[test]
        fn int_cells_preserve_order(a in any::<i64>(), b in any::<i64>()) {
            let (ca, cb) = (Value::Int(a).to_cell(), Value::Int(b).to_cell());
            prop_assert_eq!(a.cmp(&b), ca.cmp(&cb));
            prop_assert_eq!(Value::from_cell(ValueKind::Int, ca), Value::Int(a));
        }

        #[test]
        fn float_cells_follow_total_order(a in any::<f64>(), b in any::<f64>()) {
            let (ca, cb) = (Value::Float(a).to_cell(), Value::Float(b).to_cell());
            prop_assert_eq!(a.total_cmp(&b), ca.cmp(&cb));
            let back = Value::from_cell(ValueKind::Float, ca);
            match back {
                Value::Float(x) => prop_assert_eq!(x.to_bits(), a.to_bits()),
                _ => prop_assert!(false),
            }
        }
    }
}
