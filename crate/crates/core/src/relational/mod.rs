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

//! Local, single-partition table operators. The distributed layer composes
//! these with a shuffle.

mod aggregate;
mod join;
mod predicate;
mod setops;
mod sort;

pub(crate) use aggregate::aggregate_column;
pub use aggregate::{aggregate, groupby_aggregate, AggFunc, AggSpec, Aggregation};
pub use join::{join, JoinSpec, JoinType};
pub use predicate::{project, select, Atom, Comparison, Predicate};
pub use setops::{cartesian_product, difference, distinct, intersect, union};
pub use sort::{compare_values, sort, Direction, RowComparator, SortKey, SortSpec};
