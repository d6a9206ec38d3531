"""The maskable stock representation, step by step.

A pool of stocks embeds to one vector per stock; a random subset is masked
(simulating an investor excluding them); visible stocks are encoded; masked
slots are filled with the learnable token; the decoder reconstructs the
masked stocks' normalized prices from the token + pool-summary slot.
"""
import datetime as dt
import numpy as np

from earnmore import plan_mask, sample_mask_ratio
from earnmore.marketdata import FeatureWindow
from earnmore.representation import (decode, embed_stocks, encode, fill_mask,
                                     init_representation_params)

rng = np.random.default_rng(42)
n_stocks, window_days = 6, 10
layout = {"prices": (0, 4), "indicators": (4, 16), "temporal": (16, 19)}

features = np.ones((n_stocks, window_days, 19))
features[:, :, :16] += 0.1 * rng.standard_normal((n_stocks, window_days, 16))
dates = [dt.date(2022, 3, 1) + dt.timedelta(days=i) for i in range(window_days)]
features[:, :, 16] = [d.weekday() for d in dates]
features[:, :, 17] = [d.day for d in dates]
features[:, :, 18] = [d.month for d in dates]
window = FeatureWindow(tickers=[f"S{i}" for i in range(n_stocks)], days=dates,
                       features=features, feature_layout=layout)

params = init_representation_params(rng, embed_dim=16, n_dense_features=16,
                                    window=window_days)

# 1. the training-time mask ratio comes from a truncated Gaussian
ratios = [sample_mask_ratio(rng) for _ in range(5)]
print("sampled mask ratios (truncated to [0.6, 0.8]):",
      np.round(ratios, 3))

# 2. embed -> plan -> encode -> fill
emb = embed_stocks(window, params)
print(f"\nstock-level embeddings: {emb.vectors.shape}")

plan = plan_mask(n_stocks, ratios[0], rng)
print(f"masked slots {plan.masked_slots.tolist()}, "
      f"visible {plan.visible_slots.tolist()}")

latents = encode(emb, plan, params)
print(f"encoder latents: pool summary + {len(latents.visible)} visible slots")

rep = fill_mask(latents, plan, params["token"])
print(f"filled representation: {rep.slots.shape} "
      f"(slot 0 = pool summary, masked slots hold the token)")
print("masked flags:", rep.masked_flag.tolist())
same_as_token = np.array_equal(rep.slots[1 + plan.masked_slots[0]],
                               params["token"])
print("masked slot equals the token bitwise:", same_as_token)

# 3. reconstruct the masked stocks' normalized OHLC windows
out = decode(rep, params)
print(f"\ndecoded price predictions: {out.predicted_prices.shape} "
      f"(masked stocks x days x OHLC)")

# 4. inference mode: the investor's pool forces the mask
from earnmore import PoolMask
pool = PoolMask(np.array([True, True, False, True, False, True]))
forced = plan_mask(n_stocks, 0.0, forced=pool)
print(f"\ninvestor pool keeps slots {forced.visible_slots.tolist()}; "
      f"masked {forced.masked_slots.tolist()} (ratio argument ignored)")
