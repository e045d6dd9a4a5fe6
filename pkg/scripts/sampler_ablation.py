"""Compare reverse-chain variants on a trained model: MI of one end-to-end round per SNR.

    python scripts/sampler_ablation.py out/qam16/model.json
"""

import argparse

from diffshape.channel import ChannelSpec, NoiseFamily
from diffshape.constellation import qam_geometry
from diffshape.diffusion import build_schedule
from diffshape.harness import load_model, substream
from diffshape.link import SamplerOptions, transmit_round
from diffshape.metrics import entropy, mutual_information

VARIANTS = {
    "ancestral/full": SamplerOptions(stochastic=True, entry="full"),
    "mean/full": SamplerOptions(stochastic=False, entry="full"),
    "ancestral/matched": SamplerOptions(stochastic=True, entry="snr_matched"),
    "mean/matched": SamplerOptions(stochastic=False, entry="snr_matched"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("--snr", type=float, nargs="+", default=[-20, -10, 0, 10, 20, 30])
    ap.add_argument("--symbols", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model, meta = load_model(args.model)
    g = qam_geometry(meta["modulation_order"])
    s = build_schedule(model.T)
    print("snr_db  " + "  ".join(f"{v:>22}" for v in VARIANTS) + "   (MI bits / shaping entropy)")
    for snr in args.snr:
        cells = []
        for i, (name, opts) in enumerate(VARIANTS.items()):
            rng = substream(args.seed, "ablation", snr, i)
            rec, shp = transmit_round(model, g, s, ChannelSpec(NoiseFamily.GAUSSIAN, snr), args.symbols,
                                      rng, options=opts)
            mi = mutual_information(rec.tx_indices, rec.rx_indices, g.order)
            cells.append(f"{mi:10.3f} / {entropy(shp.distribution):9.3f}")
        print(f"{snr:6g}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
