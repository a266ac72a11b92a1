// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Operator-based distributed data engine.
//!
//! Two first-class data abstractions share one execution substrate:
//!
//! - [`columnar::Table`]: column-major tables with null tracking, operated on
//!   by local relational operators ([`relational`]) and their distributed,
//!   shuffle-based counterparts ([`dist`]).
//! - [`collectives::NumericArray`]: dense numeric arrays, operated on by
//!   MPI-style collectives ([`collectives`]).
//!
//! Every distributed operator runs SPMD-style on a [`comm::Communicator`],
//! which can be backed by an in-process simulated cluster or by TCP. Workers
//! compute independently and synchronize only at matched operator calls.

pub mod collectives;
pub mod columnar;
pub mod comm;
pub mod dist;
pub mod error;
pub mod hash;
pub mod mds;
pub mod relational;

pub use error::{CommError, Error, ParseError, Result};
