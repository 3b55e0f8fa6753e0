"""
有限の測度付き電気回路網（フラクタル近似）上で、抵抗距離・体積増大・熱核・Green 核・脱出時間を計算し、
熱核評価（対角/非対角/脱出時間裾/揺らぎ/局所）の定数を具体例で検証するライブラリ。
"""
