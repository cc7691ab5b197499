"""Memory-access optimization passes over a small tensor loop-nest IR."""

__version__ = "0.1.0"

from .affine import (  # noqa: F401
    IntBox,
    MapClass,
    QuasiAffineExpr,
    QuasiAffineMap,
    affine_map,
    classify,
    compose,
    identity_map,
    image,
    reverse,
    variables,
)
from .bankmap import (  # noqa: F401
    AnchorRegistry,
    BankMapping,
    materialize,
    propagate,
    run_global_mapping,
    run_local_baseline,
    seed_anchors,
    transfer,
)
from .dme import run_dme, try_eliminate_pair  # noqa: F401
from .generators import generate_resnet_analog, generate_wavenet_analog  # noqa: F401
from .interp import TensorStore, equivalent, run  # noqa: F401
from .ir import (  # noqa: F401
    OperatorNest,
    Program,
    TensorDecl,
    dependence_edges,
    find_copy_pairs,
    validate,
)
from .textual import parse, print_program  # noqa: F401
from .traffic import account, compare  # noqa: F401
