from .adapter import (
    AdapterKind,
    AdapterPlacement,
    LinearAdapter,
    adapt,
    adapter_layer_index,
    adapter_parameter_count,
    adapter_vector,
    apply_adapter,
    collapse_lhn,
    collapse_lin,
    extract_adapter,
    insert_adapter,
    make_output_mask,
    prepare_for_adaptation,
    run_adaptation,
)

__all__ = [
    "AdapterKind", "AdapterPlacement", "LinearAdapter", "adapt", "adapter_layer_index",
    "adapter_parameter_count", "adapter_vector", "apply_adapter", "collapse_lhn",
    "collapse_lin", "extract_adapter", "insert_adapter", "make_output_mask",
    "prepare_for_adaptation", "run_adaptation",
]
