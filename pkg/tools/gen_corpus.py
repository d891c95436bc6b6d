import os
import sys

# tools/gen_corpus.py -> tools -> project_root
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.imageio import save_edge_map, save_image
from src.metrics import generate_disk_image, generate_roof_image, generate_step_image

# ============================================================
# 在这里配置你想要的语料
# ============================================================
OUTPUT_DIR = os.path.join(project_root, "corpus")
COLOR_A = (255, 0, 0)
COLOR_B = (0, 0, 255)
NOISE_RATE = 0.005
SEED = 7

corpus = {
    "step_vertical": lambda **kw: generate_step_image(64, 64, COLOR_A, COLOR_B, "vertical", **kw),
    "step_horizontal": lambda **kw: generate_step_image(64, 64, COLOR_A, COLOR_B, "horizontal", **kw),
    "step_diagonal": lambda **kw: generate_step_image(64, 64, COLOR_A, COLOR_B, "diagonal", **kw),
    "disk_r20": lambda **kw: generate_disk_image(64, 20, COLOR_A, COLOR_B, **kw),
    "roof_vertical": lambda **kw: generate_roof_image(64, 64, COLOR_A, COLOR_B, "vertical", **kw),
}
# ============================================================


def generate_corpus(output_dir):
    os.makedirs(output_dir, exist_ok=True)
    for name, generate in corpus.items():
        for suffix, kwargs in (("", {}), ("_noisy", {"noise": NOISE_RATE, "seed": SEED})):
            img, truth = generate(**kwargs)
            save_image(img, os.path.join(output_dir, f"{name}{suffix}.png"))
            save_edge_map(truth.edges, os.path.join(output_dir, f"{name}{suffix}_truth.png"), truth.provenance)
            print(f"{name}{suffix}: {truth.provenance}")
    print(f"\n语料已写入: {output_dir}")


if __name__ == "__main__":
    generate_corpus(sys.argv[1] if len(sys.argv) > 1 else OUTPUT_DIR)
