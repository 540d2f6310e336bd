"""Ground-truth converters: palette masks and VOC XML boxes."""
import json

import numpy as np
import pytest
from PIL import Image

from bundle_exporter import VOC_CLASS_IDS, boxes_from_xml, convert_box_dir, convert_mask_dir

XML_TEMPLATE = """
<annotation>
  <filename>{name}.jpg</filename>
  <object>
    <name>dog</name>
    <bndbox><xmin>1</xmin><ymin>1</ymin><xmax>40</xmax><ymax>30</ymax></bndbox>
  </object>
  <object>
    <name>person</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>25</xmax><ymax>50</ymax></bndbox>
  </object>
</annotation>
"""


def write_palette_png(path, values):
    arr = np.asarray(values, dtype=np.uint8)
    img = Image.fromarray(arr, mode="P")
    palette = [0] * 768
    palette[3:6] = [128, 0, 0]
    img.putpalette(palette)
    img.save(path)


class TestMaskConverter:
    def test_palette_indices_preserved(self, tmp_path):
        values = [[0, 1, 255], [1, 1, 0]]
        write_palette_png(tmp_path / "m.png", values)
        (tmp_path / "out").mkdir()
        count = convert_mask_dir(tmp_path, tmp_path / "out")
        assert count == 1
        arr = np.load(tmp_path / "out" / "m.npy")
        assert arr.dtype == np.int32
        np.testing.assert_array_equal(arr, values)

    def test_rgb_png_rejected(self, tmp_path):
        Image.new("RGB", (4, 4)).save(tmp_path / "rgb.png")
        with pytest.raises(ValueError):
            convert_mask_dir(tmp_path, tmp_path / "out")

    def test_empty_dir_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ValueError):
            convert_mask_dir(tmp_path / "empty", tmp_path / "out")


class TestBoxConverter:
    def test_voc_coordinates_become_zero_based_exclusive(self, tmp_path):
        xml = tmp_path / "img1.xml"
        xml.write_text(XML_TEMPLATE.format(name="img1"))
        boxes = boxes_from_xml(xml)
        assert boxes[0] == [0, 0, 40, 30, VOC_CLASS_IDS["dog"]]
        assert boxes[1] == [9, 19, 25, 50, VOC_CLASS_IDS["person"]]

    def test_sidecar_round_trip(self, tmp_path):
        for name in ("a", "b"):
            (tmp_path / f"{name}.xml").write_text(XML_TEMPLATE.format(name=name))
        out = tmp_path / "boxes.json"
        convert_box_dir(tmp_path, out)
        sidecar = json.loads(out.read_text())
        assert sorted(sidecar) == ["a", "b"]
        assert len(sidecar["a"]) == 2

    def test_unknown_class_rejected(self, tmp_path):
        xml = tmp_path / "bad.xml"
        xml.write_text(XML_TEMPLATE.replace("dog", "unicorn").format(name="bad"))
        with pytest.raises(KeyError):
            boxes_from_xml(xml)
