def deep_merge(base:dict, overrides:dict) -> dict:
    """Nested merge; values from overrides win, None values in overrides are ignored."""
    merged = dict(base)
    for k, v in overrides.items():
        if v is None:
            continue
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = deep_merge(merged[k], v)
        else:
            merged[k] = v
    return merged
