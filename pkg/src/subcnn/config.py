"""YAML model configs and shipped presets.

Schema (see presets/*.yaml for worked examples):

    name: mnist-msr
    arch: msr | ssr | bcnn
    input: {channels: 1, height: 28, width: 28}
    classes: 10
    frontend: {mode: asd, depth: 1, order: 5, wavelet: db2}   # absent for bcnn
    layers:                      # conv out counts are PER PATH for msr
      - conv: {k: 3, out: 16}
      - pool
    fc_hidden: [4096, 1024]      # final classes layer is implicit
    fc_input: 6272               # optional, cross-checked at build time
    dropout: 0.5

Preset names resolve from the packaged presets/ directory; a trailing
-asd/-casd/-wsd overrides the frontend mode, so "mnist-msr-casd" loads
mnist-msr.yaml with mode casd.
"""

import importlib.resources
from pathlib import Path

import yaml

from .frontend import FrontendSpec
from .model import ConfigError, LayerSpec, ModelConfig

FRONTEND_MODES = ("asd", "casd", "wsd")


def config_from_dict(d):
    try:
        inp = d["input"]
        input_shape = (int(inp["channels"]), int(inp["height"]), int(inp["width"]))
        layers = []
        for item in d["layers"]:
            if item == "pool":
                layers.append(LayerSpec("pool"))
            elif isinstance(item, dict) and "conv" in item:
                layers.append(LayerSpec("conv", k=int(item["conv"]["k"]),
                                        out_ch=int(item["conv"]["out"])))
            else:
                raise ConfigError(f"bad layer entry: {item!r}")
        fe = None
        if d.get("frontend"):
            f = d["frontend"]
            fe = FrontendSpec(mode=f["mode"], depth=int(f.get("depth", 1)),
                              order=int(f.get("order", 5)), channels=input_shape[0],
                              wavelet=f.get("wavelet", "db2"))
        return ModelConfig(
            name=d.get("name", "unnamed"),
            arch=d["arch"],
            input_shape=input_shape,
            classes=int(d["classes"]),
            layers=layers,
            fc_hidden=[int(v) for v in d["fc_hidden"]],
            dropout=float(d.get("dropout", 0.5)),
            frontend=fe,
            fc_input=int(d["fc_input"]) if "fc_input" in d else None,
        )
    except KeyError as e:
        raise ConfigError(f"config missing required key {e}") from e


def config_to_dict(cfg: ModelConfig):
    d = {
        "name": cfg.name,
        "arch": cfg.arch,
        "input": {"channels": cfg.input_shape[0], "height": cfg.input_shape[1],
                  "width": cfg.input_shape[2]},
        "classes": cfg.classes,
        "layers": ["pool" if ls.kind == "pool" else {"conv": {"k": ls.k, "out": ls.out_ch}}
                   for ls in cfg.layers],
        "fc_hidden": list(cfg.fc_hidden),
        "dropout": cfg.dropout,
    }
    if cfg.frontend is not None:
        d["frontend"] = {"mode": cfg.frontend.mode, "depth": cfg.frontend.depth,
                         "order": cfg.frontend.order, "wavelet": cfg.frontend.wavelet}
    if cfg.fc_input is not None:
        d["fc_input"] = cfg.fc_input
    return d


def config_to_yaml(cfg: ModelConfig):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def load_config_text(text, frontend_override=None):
    d = yaml.safe_load(text)
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a YAML mapping")
    if frontend_override:
        if not d.get("frontend"):
            raise ConfigError("cannot override frontend mode on a frontend-less config")
        d["frontend"]["mode"] = frontend_override
    return config_from_dict(d)


def preset_names():
    root = importlib.resources.files("subcnn") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_config(name_or_path, frontend_override=None):
    """Load a config from a file path or a packaged preset name."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return load_config_text(p.read_text(), frontend_override)
    name = str(name_or_path)
    for mode in FRONTEND_MODES:
        if name.endswith(f"-{mode}") and frontend_override is None:
            name, frontend_override = name[:-len(mode) - 1], mode
            break
    root = importlib.resources.files("subcnn") / "presets"
    res = root / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"no such config file or preset: {name_or_path!r} "
                          f"(presets: {', '.join(preset_names())})")
    return load_config_text(res.read_text(), frontend_override)
