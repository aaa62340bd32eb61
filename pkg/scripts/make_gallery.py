"""Write the bundled scenario gallery to src/accsim/scenarios/."""
import json
from pathlib import Path

from accsim.core import scenario_to_dict
from accsim.gallery import build_gallery, recorded_drive_dict, recorded_lead

OUT = Path(__file__).resolve().parents[1] / "src" / "accsim" / "scenarios"


def main():
    for name, s in build_gallery().items():
        (OUT / f"{name}.json").write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
        print("wrote", name)
    t, v = recorded_lead()
    rows = ["t,v"] + [f"{a!r},{b!r}" for a, b in zip(t, v)]
    (OUT / "recorded_lead.csv").write_text("\n".join(rows) + "\n")
    (OUT / "recorded_drive.json").write_text(json.dumps(recorded_drive_dict(), indent=2) + "\n")
    print("wrote recorded_drive")


if __name__ == "__main__":
    main()
