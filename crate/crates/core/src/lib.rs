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


//! A provenance-aware Datalog engine.
//!
//! Programs are parsed and planned into relational-algebra rules
//! ([`ram`]), compiled to straight-line vector-register code ([`apm`]) and
//! executed to fixpoint by a data-parallel columnar interpreter
//! ([`runtime`]). Facts are tagged by a pluggable [`provenance`] semiring.

pub mod apm;
pub mod compiler;
pub mod db;
pub mod frontend;
pub mod provenance;
pub mod ram;
pub mod runtime;
pub mod session;
pub mod value;
