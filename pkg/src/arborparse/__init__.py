"""Graph-based semantic parsing via valency-constrained arborescences.

Decoding finds the best joint tagging + dependency structure of a sentence
(a generalized valency-constrained not-necessarily-spanning arborescence);
latent anchoring aligns a known AST onto a sentence.  Both are solved by a
conditional-gradient method over a smoothed-penalty objective, with exact
brute-force oracles available for small instances.
"""

from .anchoring import (
    Alignment,
    AlignmentChart,
    AnchoringError,
    backtrack_alignment,
    dp_alignment,
    hungarian_round,
    latent_anchoring_target,
    lmo_alignment,
)
from .arborescence import (
    ContractedGraph,
    contract,
    lmo_arborescence,
    max_spanning_arborescence,
)
from .grammar import (
    Ast,
    Grammar,
    GrammarError,
    ProgramParseError,
    ValidationReport,
    canonical_program,
    is_entity,
    parse_grammar,
    parse_program,
    programs_match,
    serialize_ast,
    validate_ast,
)
from .graph import (
    ExtendedGraph,
    InfeasibleSolutionError,
    SolutionVector,
    build_graph,
    check_solution,
    extend_solution,
    graph_from_weights,
    restrict_solution,
    solution_anchors,
    solution_to_ast,
    weight_of,
)
from .losses import (
    DatasetError,
    Instance,
    LossReport,
    ScorerParams,
    anchoring_target,
    apply_gradient,
    feature_slots,
    format_instance,
    load_params,
    parse_dataset,
    save_params,
    score_graph,
    supervised_loss,
    surrogate_log_partition,
    train,
    weak_loss,
)
from .oracle import (
    BudgetExceededError,
    EnumerationBudget,
    alignment_to_solution,
    alignment_weight,
    enumerate_alignments,
    enumerate_feasible,
    exact_log_partition,
    exact_map,
)
from .solver import (
    ConstraintSystem,
    SolveResult,
    SolverConfig,
    build_anchoring_constraints,
    build_map_constraints,
    conditional_gradient,
    latent_anchoring,
    map_inference,
    penalty_value_grad,
    round_support,
    step_size_equality,
    step_size_inequality,
)

__version__ = "0.1.0"
