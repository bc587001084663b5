"""Comparing two rate-distortion curves with the Bjontegaard delta rate.

A curve that reaches every PSNR with half the bits scores -50%.
"""

from pcartifact import bd_rate

anchor = [(0.1, 60.0), (0.2, 63.0), (0.4, 66.5), (0.8, 69.0)]
halved = [(r / 2, p) for r, p in anchor]
print(f"half the rate everywhere: {bd_rate(anchor, halved):+.2f}%")

# A post-filter leaves the rate alone and raises quality, which also
# shows up as a rate saving at equal PSNR.
filtered = [(r, p + 0.8) for r, p in anchor]
print(f"+0.8 dB at the same rate: {bd_rate(anchor, filtered):+.2f}%")
