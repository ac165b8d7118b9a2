#!/usr/bin/env python3
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] in ("train", "refine", "eval", "export"):
        from goal_reaching.main import main

        main(sys.argv[1:])
    else:
        print("Usage: python3 run_goal_reaching.py [train|refine|eval|export] [options]")
