"""Regenerate the checked-in fixture PDFs (run once; outputs are committed).

Requires Python with reportlab and Pillow. The text-line counts asserted in
extract.test.ts follow directly from the drawString calls below.
"""

from pathlib import Path

from PIL import Image
from reportlab.lib.pdfencrypt import StandardEncryption
from reportlab.pdfgen import canvas

HERE = Path(__file__).parent
PAGE = (612, 792)


def thesis_a():
    # Two pages, 12 text lines total: 6 on page one, 6 on page two.
    c = canvas.Canvas(str(HERE / "thesis_a.pdf"), pagesize=PAGE, invariant=1)
    c.setFont("Helvetica-Bold", 18)
    c.drawString(72, 720, "Energy-Aware Scheduling in Embedded Systems")
    c.setFont("Helvetica", 11)
    for i, line in enumerate(
        [
            "Abstract",
            "This thesis examines scheduling policies for battery-powered devices.",
            "A simulator replays traces collected from three reference boards.",
            "Results show a fifteen percent reduction in energy use.",
            "The remainder of this document details the method and evaluation.",
        ]
    ):
        c.drawString(72, 680 - 16 * i, line)
    c.showPage()
    c.setFont("Helvetica-Bold", 13)
    c.drawString(72, 720, "1 Introduction")
    c.setFont("Helvetica", 11)
    for i, line in enumerate(
        [
            "Battery life dominates the user experience of portable devices.",
            "Schedulers decide which core executes which task and when.",
            "Energy-aware policies weigh deadlines against power states.",
            "This chapter motivates the problem and states our contributions.",
        ]
    ):
        c.drawString(72, 690 - 16 * i, line)
    c.setFont("Helvetica", 9)
    c.drawString(300, 40, "2")
    c.showPage()
    c.save()


def thesis_b():
    # One page: 4 text lines plus one embedded raster image.
    patch = HERE / "patch.png"
    Image.new("RGB", (80, 50), (190, 90, 40)).save(patch)
    c = canvas.Canvas(str(HERE / "thesis_b.pdf"), pagesize=PAGE, invariant=1)
    c.setFont("Helvetica-Bold", 14)
    c.drawString(72, 720, "2 Measurement Setup")
    c.setFont("Helvetica", 11)
    c.drawString(72, 690, "The rig captures current draw at ten kilohertz.")
    c.drawImage(str(patch), 120, 480, width=160, height=100)
    c.drawString(72, 440, "Captured traces are downsampled before analysis.")
    c.drawString(72, 424, "Calibration against a bench meter bounds the error.")
    c.showPage()
    c.save()
    patch.unlink()


def encrypted():
    enc = StandardEncryption("owner-secret", canPrint=1)
    c = canvas.Canvas(str(HERE / "encrypted.pdf"), pagesize=PAGE, encrypt=enc)
    c.setFont("Helvetica", 11)
    c.drawString(72, 700, "This content is password protected.")
    c.showPage()
    c.save()


def image_only():
    patch = HERE / "scan.png"
    Image.new("RGB", (400, 500), (230, 230, 225)).save(patch)
    c = canvas.Canvas(str(HERE / "image_only.pdf"), pagesize=PAGE, invariant=1)
    c.drawImage(str(patch), 72, 200, width=400, height=500)
    c.showPage()
    c.save()
    patch.unlink()


if __name__ == "__main__":
    thesis_a()
    thesis_b()
    encrypted()
    image_only()
    print("fixtures written to", HERE)
